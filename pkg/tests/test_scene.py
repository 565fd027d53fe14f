import json

import numpy as np
import pytest

from guessmix import scene


def test_degenerate_range_gives_exact_count():
    cfg = scene.SceneConfig(min_objects=3, max_objects=3)
    for seed in range(20):
        s = scene.generate_scene(np.random.default_rng(seed), cfg)
        assert len(s.objects) == 3


def test_object_count_within_bounds():
    cfg = scene.SceneConfig(min_objects=3, max_objects=20)
    s = scene.generate_scene(np.random.default_rng(7), cfg)
    assert 3 <= len(s.objects) <= 20


def test_same_seed_same_scene():
    cfg = scene.SceneConfig()
    a = scene.generate_scene(np.random.default_rng(42), cfg, scene_id=5)
    b = scene.generate_scene(np.random.default_rng(42), cfg, scene_id=5)
    assert a == b


def test_scene_set_ids_and_determinism():
    scenes = scene.generate_scene_set(5, seed=1)
    assert [s.scene_id for s in scenes] == [0, 1, 2, 3, 4]
    again = scene.generate_scene_set(5, seed=1)
    assert scenes == again


def test_scene_set_prefix_stable_under_growth():
    short = scene.generate_scene_set(5, seed=9)
    long = scene.generate_scene_set(8, seed=9)
    assert long[:5] == short


def test_empty_set_rejected():
    with pytest.raises(scene.SceneConfigError):
        scene.generate_scene_set(0, seed=1)


def test_bad_bounds_rejected():
    with pytest.raises(scene.SceneConfigError):
        scene.generate_scene_set(1, seed=1, cfg=scene.SceneConfig(min_objects=2))
    with pytest.raises(scene.SceneConfigError):
        scene.generate_scene_set(1, seed=1, cfg=scene.SceneConfig(max_objects=21))
    with pytest.raises(scene.SceneConfigError):
        scene.generate_scene_set(1, seed=1, cfg=scene.SceneConfig(min_objects=9, max_objects=5))


def test_object_count_distribution_spans_range():
    scenes = scene.generate_scene_set(2000, seed=3)
    counts = {len(s.objects) for s in scenes}
    assert counts == set(range(3, 21))


def test_invariants_over_many_seeds():
    cfg = scene.SceneConfig()
    for seed in range(10_000):
        s = scene.generate_scene(np.random.default_rng(seed), cfg, scene_id=seed)
        scene.validate_scene(s)


def test_target_choice_uniform():
    k = 10
    cfg = scene.SceneConfig(min_objects=k, max_objects=k)
    n = 10_000
    hits = np.zeros(k)
    for seed in range(n):
        s = scene.generate_scene(np.random.default_rng([5, seed]), cfg)
        hits[s.target_index] += 1
    p = 1.0 / k
    bound = 3.0 * np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(hits / n - p) < bound)


def test_jsonl_round_trip(tmp_path):
    scenes = scene.generate_scene_set(20, seed=4)
    path = tmp_path / "scenes.jsonl"
    scene.write_scenes(path, scenes)
    assert scene.read_scenes(path) == scenes
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"scene_id", "objects", "target"}
    assert set(first["objects"][0]) == {"id", "category", "color", "size", "x", "y"}


def test_read_scenes_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"scene_id": 0, "objects": [], "target": 0}\n')
    with pytest.raises(ValueError, match="bad.jsonl"):
        scene.read_scenes(path)


def test_resampling_budget_exhausted_raises(monkeypatch):
    # a 1x1 grid with a 2x2 palette offers 12 attribute tuples, so 20
    # duplicate-free objects are impossible and the resample budget trips
    monkeypatch.setattr(scene, "_PALETTE_CATEGORIES", (2, 2))
    monkeypatch.setattr(scene, "_PALETTE_COLORS", (2, 2))
    cfg = scene.SceneConfig(min_objects=20, max_objects=20, grid_size=1)
    with pytest.raises(scene.SceneGenerationError):
        scene.generate_scene(np.random.default_rng(0), cfg)
