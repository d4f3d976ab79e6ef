import numpy as np
import pytest

from recme.audio_io import Clip, PcmWave, encode_wav
from recme.dataset import (
    ClassTooSmall,
    EmptyDataset,
    augment_with_noise,
    build_dataset,
    read_registry,
    speaker_order,
    split,
    write_registry,
)


def write_recording(path, seconds, freq=440.0, rate=16000, amp=0.3):
    t = np.arange(int(seconds * rate)) / rate
    wave = PcmWave(rate, 1, amp * np.sin(2 * np.pi * freq * t))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_wav(wave))


@pytest.fixture
def dataset_dir(tmp_path):
    root = tmp_path / "data"
    for i, name in enumerate(["ann", "bo", "cy", "di"]):
        write_recording(root / name / "rec.wav", 60, freq=300 + 100 * i)
    for j in range(6):
        write_recording(root / "_noise" / f"n{j}.wav", 3, freq=1000 + 50 * j, amp=0.1)
    return root


class TestBuildDataset:
    def test_four_speakers_sixty_clips(self, dataset_dir):
        index = build_dataset(dataset_dir)
        assert index.registry == ["ann", "bo", "cy", "di"]
        assert index.per_class() == {0: 60, 1: 60, 2: 60, 3: 60}

    def test_noise_sources(self, dataset_dir):
        index = build_dataset(dataset_dir)
        assert len(index.noise_clips) == 6 * 3
        assert len({c.source_id for c in index.noise_clips}) == 6

    def test_empty_root(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(EmptyDataset):
            build_dataset(tmp_path / "empty")

    def test_missing_root(self, tmp_path):
        with pytest.raises(EmptyDataset):
            build_dataset(tmp_path / "nope")

    def test_non_16k_input_resampled(self, tmp_path):
        root = tmp_path / "d"
        write_recording(root / "a" / "rec.wav", 2, rate=44100)
        write_recording(root / "b" / "rec.wav", 2, rate=8000)
        index = build_dataset(root)
        assert index.per_class() == {0: 2, 1: 2}
        assert all(clip.samples.size == 16000 for clip, _ in index.entries)

    def test_registry_manifest_controls_order(self, dataset_dir):
        write_registry(dataset_dir, ["di", "ann"])
        index = build_dataset(dataset_dir)
        # manifest first, unlisted directories appended alphabetically
        assert index.registry == ["di", "ann", "bo", "cy"]
        assert read_registry(dataset_dir) == ["di", "ann"]
        assert speaker_order(dataset_dir) == index.registry


class TestSplit:
    def test_eighty_twenty(self, dataset_dir):
        index = build_dataset(dataset_dir)
        train, val = split(index, 0.8, seed=7)
        assert train.per_class() == {0: 48, 1: 48, 2: 48, 3: 48}
        assert val.per_class() == {0: 12, 1: 12, 2: 12, 3: 12}

    def test_two_clips_half(self):
        clips = [Clip(np.zeros(16000)), Clip(np.ones(16000) * 0.1)]
        index_like = build_index(clips)
        train, val = split(index_like, 0.5, seed=0)
        assert len(train.entries) == 1 and len(val.entries) == 1

    def test_val_never_empty(self):
        clips = [Clip(np.zeros(16000)), Clip(np.ones(16000) * 0.1)]
        train, val = split(build_index(clips), 0.8, seed=0)
        assert len(val.entries) == 1  # ceil would take both; capped at n-1

    def test_disjoint_union(self, dataset_dir):
        index = build_dataset(dataset_dir)
        train, val = split(index, 0.8, seed=3)
        def keys(ds):
            return {(id(clip), label) for clip, label in ds.entries}
        assert keys(train) | keys(val) == keys(index)
        assert not keys(train) & keys(val)

    def test_deterministic(self, dataset_dir):
        index = build_dataset(dataset_dir)
        first = split(index, 0.8, seed=11)
        second = split(index, 0.8, seed=11)
        assert [id(c) for c, _ in first[0].entries] == [id(c) for c, _ in second[0].entries]

    def test_class_too_small(self):
        index_like = build_index([Clip(np.zeros(16000))])
        with pytest.raises(ClassTooSmall):
            split(index_like, 0.8, seed=0)


def build_index(clips, label=0):
    from recme.dataset import DatasetIndex

    return DatasetIndex([(c, label) for c in clips], [], ["solo"])


class TestAugment:
    def make_clip(self, value=0.5):
        return Clip(np.full(16000, value))

    def test_zero_scale_identity(self, rng):
        clip = self.make_clip()
        noise = [Clip(np.full(16000, 0.25))]
        out = augment_with_noise(clip, noise, 0.0, rng)
        assert np.array_equal(out.samples, clip.samples)

    def test_empty_noise_identity(self, rng):
        clip = self.make_clip()
        assert augment_with_noise(clip, [], 0.5, rng) is clip

    def test_silent_noise_identity(self, rng):
        clip = self.make_clip()
        out = augment_with_noise(clip, [Clip(np.zeros(16000))], 0.5, rng)
        assert np.array_equal(out.samples, clip.samples)

    def test_formula_with_forced_draw(self, monkeypatch, rng):
        clip = self.make_clip(0.5)
        noise = [Clip(np.full(16000, 0.5))]  # equal peaks

        class Forced:
            def integers(self, n):
                return 0
            def uniform(self, low, high):
                return 0.5

        out = augment_with_noise(clip, noise, 0.5, Forced())
        assert out.samples == pytest.approx(clip.samples + 0.5 * noise[0].samples)

    def test_clamped_to_unit_range(self, rng):
        clip = Clip(np.full(16000, 0.9))
        noise = [Clip(np.full(16000, 0.9))]
        for _ in range(10):
            out = augment_with_noise(clip, noise, 0.5, rng)
            assert np.max(np.abs(out.samples)) <= 1.0
