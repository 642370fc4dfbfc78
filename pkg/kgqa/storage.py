# storage.py
import json
import os
import shutil
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import arrow
import pandas as pd

from .logs import get_logger

logger = get_logger(__name__)

SUBDIRS = ('checkpoints', 'curves', 'traces', 'reports', 'data')


class StorageManager:
    """Owns one command's output directory.

    Every file or directory it creates is remembered so a failed command can
    remove exactly what it produced and nothing else.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.created: List[Path] = []
        self.started_at = arrow.utcnow()
        if not self.out_dir.exists():
            self.out_dir.mkdir(parents=True)
            self.created.append(self.out_dir)

    def get_dir(self, kind: str) -> Path:
        if kind not in SUBDIRS:
            raise ValueError(f"unknown output kind {kind!r}; expected one of {SUBDIRS}")
        path = self.out_dir / kind
        if not path.exists():
            path.mkdir(parents=True)
            self.track(path)
        return path

    def path(self, kind: str, name: str) -> Path:
        return self.get_dir(kind) / name

    def checkpoint_stem(self, name: str) -> Path:
        stem = self.path('checkpoints', name)
        self.track(stem.with_suffix('.bin'))
        self.track(stem.with_suffix('.json'))
        return stem

    def track(self, path: Path) -> None:
        if path not in self.created:
            self.created.append(path)

    def _atomic_write(self, target: Path, text: str) -> Path:
        tmp = target.with_name(target.name + '.tmp')
        with open(tmp, 'w', encoding='utf-8') as f:
            f.write(text)
        os.replace(tmp, target)
        self.track(target)
        return target

    def write_json(self, kind: str, name: str, payload: Any) -> Path:
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + '\n'
        return self._atomic_write(self.path(kind, name), text)

    def write_jsonl(self, kind: str, name: str, records: Iterable[Dict[str, Any]]) -> Path:
        text = ''.join(json.dumps(r, sort_keys=True, ensure_ascii=False) + '\n' for r in records)
        return self._atomic_write(self.path(kind, name), text)

    def append_jsonl(self, kind: str, name: str, record: Dict[str, Any]) -> Path:
        target = self.path(kind, name)
        with open(target, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + '\n')
        self.track(target)
        return target

    def write_text(self, kind: str, name: str, text: str) -> Path:
        return self._atomic_write(self.path(kind, name), text)

    def export_to_csv(self, kind: str, name: str, rows: Union[pd.DataFrame, List[Dict[str, Any]]]) -> Optional[Path]:
        """Export tabular results to CSV"""
        frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
        if frame.empty:
            return None
        target = self.path(kind, name)
        tmp = target.with_name(target.name + '.tmp')
        frame.to_csv(tmp, index=False)
        os.replace(tmp, target)
        self.track(target)
        return target

    def write_run_info(self, command: str, config: Dict[str, Any]) -> Path:
        return self.write_json('reports', 'run.json', {
            'command': command,
            'started_at': self.started_at.isoformat(),
            'config': config,
        })

    def cleanup(self) -> None:
        """Remove everything this manager created, newest first."""
        for path in reversed(self.created):
            try:
                if path.is_dir():
                    shutil.rmtree(path)
                elif path.exists():
                    path.unlink()
            except OSError as e:
                logger.warning("cleanup_failed", path=str(path), error=str(e))
        logger.info("partial_outputs_removed", count=len(self.created))
        self.created = []
