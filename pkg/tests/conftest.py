import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from genreprobe.audio_io import decode_wav
from genreprobe.encoders import reference_logmel
from genreprobe.feature_store import feature_path, write_features
from genreprobe.synthetic import SyntheticSpec, generate


@pytest.fixture(scope="session")
def default_synth(tmp_path_factory):
    """The full default synthetic dataset (300 clips), generated once."""
    root = tmp_path_factory.mktemp("synth_default")
    start = time.time()
    manifest = generate(SyntheticSpec(), root)
    return {"root": root, "manifest": manifest,
            "generate_seconds": time.time() - start}


@pytest.fixture(scope="session")
def default_synth_features(default_synth, tmp_path_factory):
    """Log-mel features for every default synthetic clip, extracted once."""
    froot = tmp_path_factory.mktemp("features_default")
    start = time.time()
    for entry in default_synth["manifest"].entries:
        clip = decode_wav(entry.path, clip_id=entry.clip_id)
        write_features(reference_logmel(clip),
                       feature_path(froot, "logmel64", 0, entry.clip_id))
    return {"root": froot, "extract_seconds": time.time() - start}
