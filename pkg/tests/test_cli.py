import json

import pytest

from kgqa.cli import build_parser, collect_overrides, run
from kgqa.config import ABLATION_ARMS, SECTION_DEFAULTS, TOP_LEVEL_DEFAULTS
from kgqa.kg import ingest_triples, read_dataset

from .helpers import TINY_SETTINGS


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch):
    monkeypatch.setenv('KGQA_ENV', 'test')
    monkeypatch.setenv('KGQA_LOG_LEVEL', 'WARNING')


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps(TINY_SETTINGS))
    return path


@pytest.fixture
def data_dir(tmp_path, config_file):
    out = tmp_path / 'gen'
    assert run(['gen-data', '--config', str(config_file), '--out', str(out), '--seed', '7']) == 0
    return out / 'data'


def error_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith('error code=')]


class TestParser:
    def test_help_lists_every_key(self, capsys):
        assert run(['train', '--help']) == 0
        text = capsys.readouterr().out
        for section, defaults in SECTION_DEFAULTS.items():
            for key in defaults:
                assert f'--{section}.{key}' in text
        for key in TOP_LEVEL_DEFAULTS:
            assert f'--{key}' in text

    def test_flags_become_nested_overrides(self):
        args = build_parser().parse_args(['eval', '--out', 'x', '--retriever.threshold', '0.3',
                                          '--retriever.entity_update', 'false', '--eval.ablation_seeds', '1,2',
                                          '--seed', '4'])
        assert collect_overrides(args) == {
            'retriever': {'threshold': 0.3, 'entity_update': False},
            'eval': {'ablation_seeds': [1, 2]},
            'seed': 4,
        }

    def test_unset_flags_are_not_overrides(self):
        args = build_parser().parse_args(['train', '--out', 'x'])
        assert collect_overrides(args) == {}


class TestErrors:
    def test_invalid_value_exits_with_config_code(self, tmp_path, capsys):
        out = tmp_path / 'run'
        code = run(['train', '--out', str(out), '--retriever.threshold', '1.5'])
        assert code == 2
        lines = error_lines(capsys)
        assert len(lines) == 1
        assert lines[0].startswith('error code=2 type=ConfigError message="')
        assert not out.exists()

    def test_unknown_flag(self, tmp_path, capsys):
        assert run(['train', '--out', str(tmp_path / 'run'), '--retriever.bogus', '1']) == 2
        assert error_lines(capsys)

    def test_missing_subcommand(self, capsys):
        assert run([]) == 2
        assert error_lines(capsys)

    def test_data_error_cleans_up_partial_outputs(self, tmp_path, capsys):
        out = tmp_path / 'run'
        code = run(['train', '--out', str(out), '--paths.kg', str(tmp_path / 'missing.tsv')])
        assert code == 3
        assert error_lines(capsys)[0].startswith('error code=3 type=IngestError')
        assert not out.exists()

    def test_existing_output_directory_survives_failure(self, tmp_path, capsys):
        out = tmp_path / 'run'
        out.mkdir()
        (out / 'keep.txt').write_text('mine')
        assert run(['train', '--out', str(out), '--paths.kg', str(tmp_path / 'missing.tsv')]) == 3
        assert sorted(p.name for p in out.iterdir()) == ['keep.txt']

    def test_malformed_embedding_header_is_a_data_error(self, tmp_path, config_file, data_dir, capsys):
        embeddings = tmp_path / 'emb.txt'
        embeddings.write_text('many 8\n')
        code = run(['train', '--config', str(config_file), '--out', str(tmp_path / 'run'),
                    '--paths.data_dir', str(data_dir), '--paths.embeddings', str(embeddings)])
        assert code == 3
        assert error_lines(capsys)[-1].startswith('error code=3 type=IngestError')

    def test_question_needs_entities(self, tmp_path, config_file, data_dir, capsys):
        code = run(['retrieve', '--config', str(config_file), '--out', str(tmp_path / 'r'),
                    '--paths.data_dir', str(data_dir), '--question', 'what?'])
        assert code == 2


class TestCommands:
    def test_gen_data(self, data_dir):
        g = ingest_triples(data_dir / 'kg.tsv')
        sizes = {name: len(read_dataset(data_dir / f'{name}.jsonl', g)) for name in ('train', 'dev', 'test')}
        assert sizes == {'train': 16, 'dev': 2, 'test': 2}
        spec = json.loads((data_dir / 'spec.json').read_text())
        assert spec['triples'] == g.num_triples
        assert (data_dir.parent / 'reports' / 'run.json').exists()

    def test_eval_oracle_predictions(self, tmp_path, config_file, data_dir):
        g = ingest_triples(data_dir / 'kg.tsv')
        preds = tmp_path / 'oracle.jsonl'
        with open(preds, 'w') as f:
            for s in read_dataset(data_dir / 'test.jsonl', g):
                f.write(json.dumps({'id': s.qid, 'predictions': list(s.gold_keys())}) + '\n')
        out = tmp_path / 'eval'
        assert run(['eval', '--config', str(config_file), '--out', str(out), '--paths.data_dir', str(data_dir),
                    '--paths.predictions', str(preds)]) == 0
        report = json.loads((out / 'reports' / 'eval_report.json').read_text())
        assert report['hits_at_1'] == 1.0
        assert report['f1'] == 1.0

    def test_retrieve_writes_prompts_and_traces(self, tmp_path, config_file, data_dir):
        out = tmp_path / 'retrieve'
        assert run(['retrieve', '--config', str(config_file), '--out', str(out), '--paths.data_dir', str(data_dir),
                    '--limit', '2']) == 0
        traces = (out / 'traces' / 'traces.jsonl').read_text().splitlines()
        prompts = [json.loads(line) for line in (out / 'reports' / 'prompts.jsonl').read_text().splitlines()]
        assert len(traces) == 2 and len(prompts) == 2
        assert all('Reasoning Paths:' in p['prompt'] for p in prompts)
        assert (out / 'reports' / 'case_studies.txt').read_text().startswith('Question: ')

    def test_adhoc_question(self, tmp_path, config_file, data_dir):
        g = ingest_triples(data_dir / 'kg.tsv')
        seed = g.entity_names[0]
        out = tmp_path / 'adhoc'
        assert run(['retrieve', '--config', str(config_file), '--out', str(out), '--paths.kg', str(data_dir / 'kg.tsv'),
                    '--question', f'what is the r0 of {seed}?', '--entities', seed]) == 0
        record = json.loads((out / 'traces' / 'traces.jsonl').read_text().splitlines()[0])
        assert record['id'] == 'adhoc'

    def test_train_then_eval_checkpoint(self, tmp_path, config_file, data_dir):
        train_out = tmp_path / 'train'
        assert run(['train', '--config', str(config_file), '--out', str(train_out),
                    '--paths.data_dir', str(data_dir)]) == 0
        fit_report = json.loads((train_out / 'reports' / 'fit.json').read_text())
        assert fit_report['epochs_run'] >= 1
        assert (train_out / 'curves' / 'training_curve.jsonl').exists()

        eval_out = tmp_path / 'eval'
        assert run(['eval', '--config', str(config_file), '--out', str(eval_out), '--paths.data_dir', str(data_dir),
                    '--paths.checkpoint', fit_report['checkpoint']]) == 0
        report = json.loads((eval_out / 'reports' / 'eval_report.json').read_text())
        assert report['num_questions'] == 2
        latency = json.loads((eval_out / 'reports' / 'latency.json').read_text())
        assert set(latency) >= {'with_pruning', 'without_pruning', 'relative_increase'}
        assert 'mean_retrieval_s' not in report

    def test_train_twice_gives_identical_checkpoints_and_reports(self, tmp_path, config_file, data_dir):
        outputs = []
        for name in ('first', 'second'):
            out = tmp_path / name
            assert run(['train', '--config', str(config_file), '--out', str(out),
                        '--paths.data_dir', str(data_dir)]) == 0
            eval_out = tmp_path / f'{name}_eval'
            assert run(['eval', '--config', str(config_file), '--out', str(eval_out),
                        '--paths.data_dir', str(data_dir),
                        '--paths.checkpoint', str(out / 'checkpoints' / 'model')]) == 0
            outputs.append((out, eval_out))
        (first, first_eval), (second, second_eval) = outputs
        for suffix in ('.bin', '.json'):
            name = 'model' + suffix
            assert (first / 'checkpoints' / name).read_bytes() == (second / 'checkpoints' / name).read_bytes()
        assert ((first_eval / 'reports' / 'eval_report.json').read_bytes()
                == (second_eval / 'reports' / 'eval_report.json').read_bytes())

    def test_train_cam(self, tmp_path, config_file, data_dir):
        out = tmp_path / 'cam'
        assert run(['train-cam', '--config', str(config_file), '--out', str(out),
                    '--paths.data_dir', str(data_dir)]) == 0
        report = json.loads((out / 'reports' / 'cam_report.json').read_text())
        assert report['samples'] == 16
        assert (out / 'checkpoints' / 'cam.bin').exists()

    @pytest.mark.slow
    def test_ablate(self, tmp_path, config_file, data_dir):
        out = tmp_path / 'ablate'
        assert run(['ablate', '--config', str(config_file), '--out', str(out), '--paths.data_dir', str(data_dir),
                    '--training.max_epochs', '1']) == 0
        summary = json.loads((out / 'reports' / 'ablation_summary.json').read_text())
        assert len(summary) == len(ABLATION_ARMS)
