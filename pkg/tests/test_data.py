import numpy as np
import pytest

from mmrnn.data import (
    SceneSpec,
    file_size,
    generate_scene,
    prototype_table,
    read_dataset,
    read_grid_pair,
    write_dataset,
    write_grid_pair,
)
from mmrnn.grid import SENTINEL_UNLABELED


def _spec(**kw):
    base = dict(height=16, width=16, num_classes=4, seed=0)
    base.update(kw)
    return SceneSpec(**base)


def test_same_seed_same_scene():
    a_c, a_d = generate_scene(_spec(seed=9))
    b_c, b_d = generate_scene(_spec(seed=9))
    assert np.array_equal(a_c.features, b_c.features)
    assert np.array_equal(a_d.features, b_d.features)
    assert np.array_equal(a_c.labels, b_c.labels)


def test_unlabeled_count_is_exact():
    g_c, _ = generate_scene(_spec(height=20, width=20, unlabeled_frac=0.1))
    assert int((~g_c.valid).sum()) == 40


def test_masks_and_labels_shared_across_modalities():
    g_c, g_d = generate_scene(_spec(seed=4))
    assert np.array_equal(g_c.labels, g_d.labels)
    assert np.array_equal(g_c.valid, g_d.valid)


def test_ambiguity_requires_four_classes():
    with pytest.raises(ValueError):
        _spec(num_classes=3, ambiguity=0.5)


def test_prototype_collisions_follow_xor_pattern():
    spec = _spec(ambiguity=1.0, noise_sigma=0.0)
    pc = prototype_table(spec, "c")
    pd = prototype_table(spec, "d")
    assert np.array_equal(pc[0], pc[1]) and np.array_equal(pc[2], pc[3])
    assert np.array_equal(pd[0], pd[2]) and np.array_equal(pd[1], pd[3])
    # joint prototypes remain unique
    joint = np.concatenate([pc, pd], axis=1)
    assert len({tuple(row) for row in joint}) == 4


def _nearest_prototype_accuracy(grid, protos):
    """Brute-force 1-NN on prototypes, lowest class index on ties."""
    hits = total = 0
    for i in range(grid.height):
        for j in range(grid.width):
            if not grid.valid[i, j]:
                continue
            d2 = ((protos - grid.features[i, j]) ** 2).sum(axis=1)
            pred = int(np.argmin(d2))
            hits += pred == grid.labels[i, j]
            total += 1
    return hits / total


def test_oracle_separation_on_noiseless_scene():
    spec = _spec(ambiguity=1.0, noise_sigma=0.0, unlabeled_frac=0.0, seed=3)
    g_c, g_d = generate_scene(spec)
    pc = prototype_table(spec, "c")
    pd = prototype_table(spec, "d")
    acc_c = _nearest_prototype_accuracy(g_c, pc)
    acc_d = _nearest_prototype_accuracy(g_d, pd)
    assert acc_c < 0.75 and acc_d < 0.75
    # joint modality separates perfectly
    joint_grid_feats = np.concatenate([g_c.features, g_d.features], axis=-1)
    joint_protos = np.concatenate([pc, pd], axis=1)
    hits = 0
    for i in range(16):
        for j in range(16):
            d2 = ((joint_protos - joint_grid_feats[i, j]) ** 2).sum(axis=1)
            hits += int(np.argmin(d2)) == g_c.labels[i, j]
    assert hits == 16 * 16


def test_every_class_appears_on_16x16_maps():
    missing = 0
    for seed in range(100):
        g_c, _ = generate_scene(_spec(seed=seed, unlabeled_frac=0.0))
        if len(np.unique(g_c.labels)) < 4:
            missing += 1
    assert missing <= 1


def test_file_size_formula():
    assert file_size(8, 8, 16, 8) == 24 + 4 * 64 * 24 + 64 == 6232


def test_round_trip_is_exact(tmp_path):
    pair = generate_scene(_spec(seed=11))
    path = tmp_path / "scene.mmg"
    write_grid_pair(path, pair)
    assert path.stat().st_size == file_size(16, 16, 16, 8)
    back_c, back_d = read_grid_pair(path)
    assert np.array_equal(back_c.features, pair[0].features)
    assert np.array_equal(back_d.features, pair[1].features)
    assert np.array_equal(back_c.labels, pair[0].labels)
    assert np.array_equal(back_c.valid, pair[0].valid)


def test_bad_magic_rejected(tmp_path):
    pair = generate_scene(_spec(seed=1, height=4, width=4))
    path = tmp_path / "scene.mmg"
    write_grid_pair(path, pair)
    blob = bytearray(path.read_bytes())
    blob[3] = ord("2")  # MMG1 -> MMG2
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError, match="magic"):
        read_grid_pair(path)


def test_truncated_file_rejected_with_offset(tmp_path):
    pair = generate_scene(_spec(seed=1, height=4, width=4))
    path = tmp_path / "scene.mmg"
    write_grid_pair(path, pair)
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(ValueError, match="byte"):
        read_grid_pair(path)


def test_dataset_directory_round_trip(tmp_path):
    scenes = [generate_scene(_spec(seed=s, height=6, width=5)) for s in range(3)]
    names = write_dataset(tmp_path, scenes)
    assert names == ["scene_0000.mmg", "scene_0001.mmg", "scene_0002.mmg"]
    manifest = (tmp_path / "manifest.txt").read_text().splitlines()
    assert manifest == names
    back = read_dataset(tmp_path)
    assert len(back) == 3
    for (w_c, w_d), (r_c, r_d) in zip(scenes, back):
        assert np.array_equal(w_c.features, r_c.features)
        assert np.array_equal(w_d.features, r_d.features)


def test_sentinel_survives_serialization(tmp_path):
    pair = generate_scene(_spec(seed=2, unlabeled_frac=0.2))
    path = tmp_path / "scene.mmg"
    write_grid_pair(path, pair)
    back_c, _ = read_grid_pair(path)
    assert np.array_equal(back_c.labels == SENTINEL_UNLABELED, ~pair[0].valid)
