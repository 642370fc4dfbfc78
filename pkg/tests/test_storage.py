import json

import pandas as pd
import pytest

from kgqa.storage import StorageManager


def test_cleanup_removes_only_created_paths(tmp_path):
    (tmp_path / 'reports').mkdir()
    keep = tmp_path / 'reports' / 'previous.json'
    keep.write_text('{}')

    storage = StorageManager(tmp_path)
    storage.write_json('reports', 'eval_report.json', {'hits_at_1': 0.5})
    storage.append_jsonl('curves', 'training_curve.jsonl', {'epoch': 1})
    stem = storage.checkpoint_stem('model')
    stem.with_suffix('.bin').write_bytes(b'\x00')
    storage.cleanup()

    assert keep.exists()
    assert not (tmp_path / 'reports' / 'eval_report.json').exists()
    assert not (tmp_path / 'curves').exists()
    assert not (tmp_path / 'checkpoints').exists()
    assert tmp_path.exists()


def test_cleanup_removes_a_fresh_output_directory(tmp_path):
    storage = StorageManager(tmp_path / 'run')
    storage.write_text('traces', 'notes.txt', 'x')
    storage.cleanup()
    assert not (tmp_path / 'run').exists()


def test_cleanup_tolerates_missing_checkpoint_files(tmp_path):
    storage = StorageManager(tmp_path)
    storage.checkpoint_stem('model')
    storage.cleanup()
    assert storage.created == []


def test_json_is_sorted_and_newline_terminated(tmp_path):
    storage = StorageManager(tmp_path)
    path = storage.write_json('reports', 'r.json', {'b': 1, 'a': 2})
    text = path.read_text()
    assert text.endswith('\n')
    assert list(json.loads(text)) == ['a', 'b']
    assert not list((tmp_path / 'reports').glob('*.tmp'))


def test_jsonl_append(tmp_path):
    storage = StorageManager(tmp_path)
    storage.append_jsonl('curves', 'c.jsonl', {'epoch': 1})
    storage.append_jsonl('curves', 'c.jsonl', {'epoch': 2})
    lines = (tmp_path / 'curves' / 'c.jsonl').read_text().splitlines()
    assert [json.loads(line)['epoch'] for line in lines] == [1, 2]


def test_export_to_csv(tmp_path):
    storage = StorageManager(tmp_path)
    path = storage.export_to_csv('reports', 'rows.csv', [{'arm': 'a', 'hits_at_1': 0.5}])
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['arm', 'hits_at_1']
    assert storage.export_to_csv('reports', 'empty.csv', []) is None
    assert not (tmp_path / 'reports' / 'empty.csv').exists()


def test_unknown_kind(tmp_path):
    with pytest.raises(ValueError):
        StorageManager(tmp_path).get_dir('logs')


def test_run_info(tmp_path):
    storage = StorageManager(tmp_path)
    info = json.loads(storage.write_run_info('train', {'seed': 1}).read_text())
    assert info['command'] == 'train'
    assert info['config'] == {'seed': 1}
    assert 'started_at' in info
