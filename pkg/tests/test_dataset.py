import json

import numpy as np
import pytest

from conftest import tiny_profile
from modalnode.dataset import (
    PROFILES,
    BundleFormatError,
    Dataset,
    generate_dataset,
    generate_trajectory,
    load_bundle,
    max_system,
    output_shape,
    regenerate_at_rate,
    save_bundle,
)
from modalnode.integrator import StabilityError, check_stability
from modalnode.modal import readout


def bundles_equal(a, b):
    return (
        a.params == b.params and a.pluck == b.pluck and a.x_o == b.x_o and a.fs == b.fs and a.meta == b.meta
        and all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("q", "p", "w", "excitation"))
    )


def test_round_trip_is_bitwise(tiny_bundles, tmp_path):
    b = tiny_bundles[0]
    save_bundle(b, tmp_path / "t.bin")
    back = load_bundle(tmp_path / "t.bin")
    assert bundles_equal(b, back)
    assert back.q.tobytes() == b.q.tobytes()


def test_truncated_and_corrupted_files(tiny_bundles, tmp_path):
    path = tmp_path / "t.bin"
    save_bundle(tiny_bundles[1], path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(BundleFormatError, match="bytes"):
        load_bundle(path)
    flipped = bytearray(raw)
    flipped[-5] ^= 0xFF
    path.write_bytes(bytes(flipped))
    with pytest.raises(BundleFormatError, match="checksum"):
        load_bundle(path)
    path.write_bytes(b"NOTABUND" + raw[8:])
    with pytest.raises(BundleFormatError):
        load_bundle(path)
    path.write_bytes(raw[:20])
    with pytest.raises(BundleFormatError):
        load_bundle(path)


def test_generation_is_deterministic(tmp_path):
    prof = tiny_profile(n_traj=2)
    generate_dataset(prof, tmp_path / "a")
    generate_dataset(prof, tmp_path / "b")
    for name in ("manifest.json", "traj_0000.bin", "traj_0001.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_single_trajectory_regeneration_matches_batch(tiny_bundles):
    again = generate_trajectory(tiny_profile(), 2)
    assert bundles_equal(again, tiny_bundles[2])


def test_readout_and_excitation_invariants(tiny_bundles):
    for b in tiny_bundles:
        assert np.allclose(b.w, readout(b.q, output_shape(b)), rtol=0, atol=0)
        assert np.all(b.q[0] == 0) and np.all(b.p[0] == 0)
        assert np.abs(b.q).max() > 0
        assert b.n_steps == int(0.02 * 88200)


def test_dataset_directory(tmp_path):
    prof = tiny_profile(n_traj=3)
    manifest, bundles = generate_dataset(prof, tmp_path)
    ds = Dataset(tmp_path)
    assert len(ds) == 3 == manifest["trajectory_count"]
    assert all(bundles_equal(a, b) for a, b in zip(ds, bundles))
    for entry, b in zip(manifest["trajectories"], bundles):
        assert entry["x_e"] == b.pluck.position and entry["gamma"] == b.params.gamma


def test_manifest_validation(tmp_path):
    generate_dataset(tiny_profile(n_traj=2), tmp_path)
    mpath = tmp_path / "manifest.json"
    good = json.loads(mpath.read_text())
    bad = json.loads(mpath.read_text())
    bad["trajectories"][0]["x_e"] = 0.95
    mpath.write_text(json.dumps(bad))
    with pytest.raises(ValueError, match="x_e"):
        Dataset(tmp_path)
    mpath.write_text(json.dumps(good))
    (tmp_path / "traj_0001.bin").unlink()
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path)
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path / "missing")


def test_stability_checked_before_generation():
    prof = PROFILES["paper-train"].replace(fs=44100.0, n_traj=1, duration=0.001)
    assert not check_stability(max_system(prof), 1 / 44100).passed
    with pytest.raises(StabilityError):
        generate_dataset(prof)


def test_profiles_pass_their_own_stability_check():
    for name, prof in PROFILES.items():
        assert check_stability(max_system(prof), 1 / prof.ranges.fs).passed, name


def test_profile_replace_routes_range_keys():
    prof = PROFILES["desk-string"].replace(n_traj=2, modes=3)
    assert prof.ranges.n_traj == 2 and prof.modes == 3
    assert PROFILES["desk-string"].ranges.n_traj == 8


def test_paper_test_profile_ranges():
    r = PROFILES["paper-test"].ranges
    assert r.gamma == (130.0, 246.0) and r.kappa == (1.01, 1.1) and r.sigma0 == 2.0
    assert r.fs == 96000.0 and r.duration == 3.0
    assert PROFILES["paper-train"].modes == 100 and PROFILES["paper-train"].ranges.n_traj == 60


def test_regenerate_at_rate(tiny_bundles):
    b = tiny_bundles[0]
    same = regenerate_at_rate(b, b.fs)
    assert bundles_equal(same, b)
    hi = regenerate_at_rate(b, 2 * b.fs)
    assert hi.n_steps == 2 * b.n_steps and hi.fs == 2 * b.fs
    # the pluck at doubled rate is the same function sampled twice as often
    assert np.array_equal(hi.excitation[::2], b.excitation)
