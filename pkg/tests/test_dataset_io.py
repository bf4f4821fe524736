import numpy as np
import pytest

from causalnet.data_model import CompositeLabel, DatasetId, KeyFrames, MESample
from causalnet.dataset_io import DatasetError, load_clip, load_dataset, read_meta, write_clip, write_dataset


def test_round_trip(small_synth, tmp_path):
    write_dataset(small_synth, tmp_path)
    back = load_dataset(tmp_path)
    assert [s.uid for s in back] == sorted(s.uid for s in small_synth)
    by_uid = {s.uid: s for s in small_synth}
    for s in back:
        ref = by_uid[s.uid]
        assert s.keyframes == ref.keyframes and s.composite_label == ref.composite_label
        assert s.frame_rate == ref.frame_rate
        assert np.array_equal(s.frames, ref.frames)
    assert [s.uid for s in load_dataset(tmp_path / "SYNTH")] == [s.uid for s in back]


def test_meta_is_one_based(small_synth, tmp_path):
    s = small_synth[0]
    write_clip(s, tmp_path / "SYNTH" / "s01" / "c000")
    meta = read_meta(tmp_path / "SYNTH" / "s01" / "c000" / "meta.txt")
    assert int(meta["onset"]) == s.keyframes.onset + 1
    assert int(meta["offset"]) == s.keyframes.offset + 1


def _write_meta(clip, **meta):
    clip.mkdir(parents=True, exist_ok=True)
    (clip / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def test_excluded_emotion_returns_none(tmp_path):
    clip = tmp_path / "CASME2" / "sub01" / "EP01"
    _write_meta(clip, onset=1, apex=2, offset=3, emotion="others", frame_rate=200)
    assert load_clip(clip) is None


def test_missing_meta_key(tmp_path):
    clip = tmp_path / "CASME2" / "sub01" / "EP01"
    _write_meta(clip, onset=1, apex=2, emotion="happiness", frame_rate=200)
    with pytest.raises(DatasetError, match="offset"):
        load_clip(clip)


def test_invalid_keyframes_rejected(tmp_path, small_synth):
    s = small_synth[0]
    clip = tmp_path / "SYNTH" / "s01" / "c000"
    write_clip(s, clip)
    _write_meta(clip, onset=50, apex=10, offset=60, emotion="happiness", frame_rate=200)
    with pytest.raises(DatasetError, match="apex < onset"):
        load_clip(clip)


def test_unknown_dataset_id(tmp_path):
    clip = tmp_path / "MMEW" / "s" / "c"
    _write_meta(clip, onset=1, apex=2, offset=3, emotion="happiness", frame_rate=200)
    with pytest.raises(DatasetError, match="unknown dataset id"):
        load_clip(clip)


def test_no_dataset_dirs(tmp_path):
    with pytest.raises(DatasetError, match="no dataset directories"):
        load_dataset(tmp_path)


def test_precomputed_flows_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    flows = tuple((rng.normal(size=(30, 30)), rng.normal(size=(30, 30))) for _ in range(2))
    s = MESample(keyframes=KeyFrames(2, 5, 9), subject_id="s01", dataset_id=DatasetId.SAMM, frame_rate=200,
                 raw_emotion="surprise", composite_label=CompositeLabel.SURPRISE, flows=flows, length=12,
                 clip_id="c1")
    write_dataset([s], tmp_path)
    back = load_dataset(tmp_path)[0]
    assert back.frames is None and back.n_frames == 12 and back.keyframes == s.keyframes
    assert np.array_equal(back.flows[1][0], flows[1][0])
