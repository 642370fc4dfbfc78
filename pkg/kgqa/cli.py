# cli.py
"""Command-line entry point.

Every subcommand takes ``--config <file.json>`` plus one ``--<section>.<key>``
flag per configuration key, and writes only under ``--out`` (``runs/<command>``
when omitted). Failures print a single
``error code=<n> type=<Class> message="..."`` line to stderr, remove whatever
the command had written, and return the error's exit code.
"""
import argparse
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .cam import ComplexityAssessor, train_cam
from .config import (
    COMMANDS,
    OUTPUT_DIR,
    SECTION_DEFAULTS,
    TOP_LEVEL_DEFAULTS,
    RunConfig,
    environment_config,
    load_run_config,
)
from .bridge import verbalize
from .engine import INFERENCE_NOISE, EngineModules, build_engine, build_provider
from .errors import ConfigError, KGQAError
from .evalbench import (
    SyntheticSpec,
    compare_pruning,
    evaluate,
    evaluate_predictions,
    generate_synthetic,
    read_predictions,
)
from .kg import KnowledgeGraph, TrainSample, ingest_triples, read_dataset
from .kg.embeddings import EmbeddingProvider
from .logs import configure_logging, get_logger
from .retriever import render_case_study, retrieve, write_traces
from .storage import StorageManager
from .training import fit

logger = get_logger(__name__)

COMMAND_HELP = {
    'gen-data': 'generate a synthetic multi-hop corpus',
    'train-cam': 'pretrain the complexity assessor on hop labels',
    'train': 'jointly train retriever, bridge and reasoner',
    'retrieve': 'write prompts and retrieval traces for questions',
    'eval': 'score a checkpoint or a prediction file',
    'ablate': 'run the ablation grid over several seeds',
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', '1', 'yes', 'on'):
        return True
    if lowered in ('false', '0', 'no', 'off'):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _flag_type(default: Any) -> Callable[[str], Any]:
    if default is None:
        return str
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, list):
        return _parse_int_list
    return str


def _describe_default(default: Any) -> str:
    if isinstance(default, bool):
        return 'true' if default else 'false'
    if default is None:
        return 'unset'
    if isinstance(default, list):
        return ','.join(str(v) for v in default)
    return str(default)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='JSON config file or a bundled config name; flags override its values')
    parser.add_argument('--out', help='output directory; nothing is written elsewhere (default: runs/<command>)')
    parser.add_argument('--progress', action='store_true', help='show progress bars')
    for key, default in TOP_LEVEL_DEFAULTS.items():
        parser.add_argument(f'--{key}', dest=key, type=_flag_type(default), default=argparse.SUPPRESS,
                            help=f'default: {_describe_default(default)}')
    for section, defaults in SECTION_DEFAULTS.items():
        group = parser.add_argument_group(section)
        for key, default in defaults.items():
            group.add_argument(f'--{section}.{key}', dest=f'{section}.{key}', type=_flag_type(default),
                               default=argparse.SUPPRESS, metavar=type(default).__name__.upper()
                               if default is not None else 'PATH',
                               help=f'default: {_describe_default(default)}')


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog='kgqa', allow_abbrev=False, description='Knowledge-graph question answering engine')
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)
    for command in COMMANDS:
        sub = subparsers.add_parser(command, help=COMMAND_HELP[command], description=COMMAND_HELP[command],
                                     allow_abbrev=False)
        _add_config_flags(sub)
        if command == 'retrieve':
            sub.add_argument('--question', help='ad hoc question text (needs --entities)')
            sub.add_argument('--entities', help='comma-separated seed entity names for --question')
            sub.add_argument('--limit', type=int, help='only the first N questions of the split')
    return parser


def collect_overrides(namespace: argparse.Namespace) -> Dict[str, Any]:
    """Nested overrides from the flags that were actually given."""
    overrides: Dict[str, Any] = {}
    for dest, value in vars(namespace).items():
        if dest in TOP_LEVEL_DEFAULTS:
            overrides[dest] = value
        elif '.' in dest:
            section, key = dest.split('.', 1)
            overrides.setdefault(section, {})[key] = value
    return overrides


# resources ------------------------------------------------------------------

def load_graph(config: RunConfig) -> KnowledgeGraph:
    path = config.paths.get('kg')
    if not path:
        raise ConfigError("paths.kg (or paths.data_dir) is required")
    return ingest_triples(path)


def load_split(config: RunConfig, graph: KnowledgeGraph, name: str, required: bool = True) -> List[TrainSample]:
    path = config.paths.get(name)
    if not path:
        if required:
            raise ConfigError(f"paths.{name} (or paths.data_dir) is required")
        return []
    return read_dataset(path, graph)


def load_cam(config: RunConfig) -> Optional[ComplexityAssessor]:
    if not config.retriever['use_cam']:
        return None
    stem = config.paths.get('cam_checkpoint')
    if not stem:
        raise ConfigError("retriever.use_cam needs paths.cam_checkpoint")
    return ComplexityAssessor.load(stem)


def load_engine(config: RunConfig, graph: KnowledgeGraph, provider: EmbeddingProvider) -> EngineModules:
    modules = build_engine(config, graph, provider, cam=load_cam(config))
    stem = config.paths.get('checkpoint')
    if stem:
        modules.load(stem)
    else:
        logger.warning("untrained_model", command=config.command)
    return modules


# commands -------------------------------------------------------------------

def cmd_gen_data(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    spec = SyntheticSpec.from_config(config.synthetic, config.seed)
    corpus = generate_synthetic(spec)
    for path in corpus.write(storage.get_dir('data')).values():
        storage.track(path)
    storage.write_json('data', 'spec.json', corpus.summary())


def cmd_train_cam(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    graph = load_graph(config)
    provider = build_provider(config, graph)
    train = load_split(config, graph, 'train')
    dev = load_split(config, graph, 'dev', required=False)
    rng = np.random.default_rng(config.seed)
    assessor, report = train_cam(train, graph, provider, config.cam, rng, dev=dev, progress=args.progress)
    assessor.save(storage.checkpoint_stem('cam'))
    storage.write_json('reports', 'cam_report.json', report)


def cmd_train(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    graph = load_graph(config)
    provider = build_provider(config, graph)
    train = load_split(config, graph, 'train')
    dev = load_split(config, graph, 'dev', required=False)
    modules = build_engine(config, graph, provider, cam=load_cam(config))
    result = fit(modules, train, dev, storage=storage, progress=args.progress)
    storage.write_json('reports', 'fit.json', {
        'best_epoch': result.best_epoch,
        'best_dev_hits1': result.best_dev_hits1,
        'epochs_run': result.epochs_run,
        'stopped_early': result.stopped_early,
        'checkpoint': str(result.checkpoint) if result.checkpoint else None,
    })


def cmd_retrieve(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    graph = load_graph(config)
    provider = build_provider(config, graph)
    modules = load_engine(config, graph, provider)
    if args.question:
        if not args.entities:
            raise ConfigError("--question needs --entities")
        seeds = tuple(graph.entity_id(name.strip()) for name in args.entities.split(',') if name.strip())
        queries = [('adhoc', args.question, seeds, provider.question(args.question))]
    else:
        samples = load_split(config, graph, config.eval['split'])
        if args.limit is not None:
            samples = samples[:args.limit]
        queries = [(s.qid, s.question, s.seeds, s.embed(provider)) for s in samples]

    traces, prompts, studies = [], [], []
    for qid, question, seeds, q_embed in queries:
        params, budget = modules.plan_for(q_embed)
        result = retrieve(graph, provider, question, seeds, params, budget, noise=INFERENCE_NOISE, q_embed=q_embed)
        prompt = verbalize(result.subgraph, graph, question, include_paths=config.bridge['textual_subgraph'])
        record = result.trace_record(graph, qid)
        traces.append(record)
        prompts.append({'id': qid, 'prompt': prompt.text, 'triples': prompt.triple_count})
        studies.append(render_case_study(record))
    write_traces(storage, traces)
    storage.write_jsonl('reports', 'prompts.jsonl', prompts)
    storage.write_text('reports', 'case_studies.txt', '\n'.join(studies))


def cmd_eval(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    graph = load_graph(config)
    samples = load_split(config, graph, config.eval['split'])
    casefold = config.eval['casefold']
    if config.paths.get('predictions'):
        report = evaluate_predictions(read_predictions(config.paths['predictions']), samples, casefold)
        storage.write_json('reports', 'eval_report.json', report.to_dict())
        return

    provider = build_provider(config, graph)
    modules = load_engine(config, graph, provider)
    report = evaluate(modules, samples, casefold=casefold, workers=config.workers, progress=args.progress)
    storage.write_json('reports', 'eval_report.json', report.to_dict())
    latency = compare_pruning(modules, samples, config.eval['timing_warmup'], config.eval['timing_repeats'])
    latency['mean_prediction_retrieval_s'] = report.mean_retrieval_s
    storage.write_json('reports', 'latency.json', latency)


def cmd_ablate(config: RunConfig, storage: StorageManager, args: argparse.Namespace) -> None:
    from .evalbench.ablation import run_ablation

    graph = load_graph(config)
    provider = build_provider(config, graph)
    train = load_split(config, graph, 'train')
    dev = load_split(config, graph, 'dev', required=False)
    test = load_split(config, graph, config.eval['split'])
    run_ablation(config, graph, provider, train, dev, test, storage=storage, cam=load_cam(config),
                 progress=args.progress)


COMMAND_HANDLERS = {
    'gen-data': cmd_gen_data,
    'train-cam': cmd_train_cam,
    'train': cmd_train,
    'retrieve': cmd_retrieve,
    'eval': cmd_eval,
    'ablate': cmd_ablate,
}


def _report_error(error: BaseException, code: int) -> None:
    message = str(error).replace('\\', '\\\\').replace('"', '\\"').replace('\n', ' ')
    print(f'error code={code} type={type(error).__name__} message="{message}"', file=sys.stderr)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand, and return its exit code."""
    storage: Optional[StorageManager] = None
    try:
        env = environment_config()
        configure_logging(env.LOG_LEVEL, env.LOG_FORMAT, env.LOG_FILE)
        args = build_parser().parse_args(argv)
        config = load_run_config(args.command, args.config, collect_overrides(args))
        storage = StorageManager(args.out or OUTPUT_DIR / config.command)
        storage.write_run_info(config.command, config.to_dict())
        logger.info("command_started", command=config.command, out=str(storage.out_dir), seed=config.seed)
        COMMAND_HANDLERS[config.command](config, storage, args)
        logger.info("command_complete", command=config.command)
        return 0
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    except KGQAError as e:
        logger.debug("command_failed", error=str(e), type=type(e).__name__)
        _report_error(e, e.exit_code)
        if storage is not None:
            storage.cleanup()
        return e.exit_code
    except Exception as e:
        logger.error("unexpected_error", error=str(e), exc_info=True)
        _report_error(e, 1)
        if storage is not None:
            storage.cleanup()
        return 1


def main() -> None:
    sys.exit(run())
