import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import synth  # noqa: E402
from lmboot.corpus import write_utterances  # noqa: E402


@pytest.fixture(scope="session")
def workspace(tmp_path_factory) -> Path:
    """A complete file-level fixture set for pipeline and CLI tests."""
    root = tmp_path_factory.mktemp("fixtures")
    write_utterances(synth.gen_utterances(1200, seed=1, rare_fraction=0.10),
                     root / "transcribed.jsonl")
    write_utterances(synth.gen_utterances(200, seed=2, rare_fraction=0.30,
                                          prefix="tune"),
                     root / "tuning.jsonl")
    write_utterances(synth.gen_utterances(200, seed=3, rare_fraction=0.30,
                                          prefix="test"),
                     root / "test.jsonl")
    write_utterances(synth.gen_utterances(400, seed=4, rare_fraction=0.60,
                                          prefix="pool"),
                     root / "pool.jsonl")
    synth.write_translation_files(250, seed=5,
                                  translations_path=root / "translations.jsonl",
                                  sources_path=root / "sources.jsonl")
    synth.write_catalogs(root / "catalogs.jsonl")
    synth.write_word_vectors(root / "vectors.txt")
    return root


@pytest.fixture
def base_config(workspace, tmp_path):
    from lmboot.pipeline import PipelineConfig

    return PipelineConfig(
        transcribed=str(workspace / "transcribed.jsonl"),
        translations=str(workspace / "translations.jsonl"),
        tuning=str(workspace / "tuning.jsonl"),
        test=str(workspace / "test.jsonl"),
        out_dir=str(tmp_path / "out"),
        catalogs=str(workspace / "catalogs.jsonl"),
        word_vectors=str(workspace / "vectors.txt"),
        selection_pool=str(workspace / "pool.jsonl"),
        source_utterances=str(workspace / "sources.jsonl"),
    )
