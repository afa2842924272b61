import math
import os
from dataclasses import replace

import numpy as np
import pytest

from dewet import cli
from dewet.cli import (
    PRESET_NAMES,
    PRESET_SCHEME,
    PRESET_TAUS,
    ParseError,
    RunManifest,
    UnknownPreset,
    ValidationError,
    apply_env_overrides,
    emit_manifest,
    main,
    parse_manifest,
    preset,
    preset_run_manifest,
    reference_manifest,
)
from dewet.grid import read_field


def small_manifest(**kw):
    base = dict(lx=1.0, ly=0.4, nx=24, ny=10, epsilon=0.1, use_g=False,
                kind="retracting_step", film_height=0.2, film_length=0.5,
                scheme="ros2", mode="fixed", tau=5e-3, t_end=0.02,
                method="direct")
    base.update(kw)
    return RunManifest(**base).validate()


# ---------------------------------------------------------------------------
# Defaults and validation
# ---------------------------------------------------------------------------

def test_defaults():
    m = RunManifest()
    assert m.epsilon == 0.1
    assert m.alpha == 9.0
    assert m.rtol == 1e-8
    assert m.scheme == "semi_implicit"
    assert m.mode == "fixed"
    assert m.precond == "ilu0"


def test_validate_names_resolution():
    with pytest.raises(ValidationError, match="h <= 0.6"):
        RunManifest(lx=10.0, nx=20, epsilon=0.1).validate()


def test_validate_rejects_bad_fields():
    with pytest.raises(ValidationError):
        small_manifest(scheme="leapfrog")
    with pytest.raises(ValidationError):
        small_manifest(kind="blob")
    with pytest.raises(ValidationError):
        small_manifest(mode="sometimes")
    with pytest.raises(ValidationError):
        small_manifest(mode="adaptive", scheme="semi_implicit")
    with pytest.raises(ValidationError):
        small_manifest(scheme="second_order", tau=1e-3, tau_init=1e-5)
    with pytest.raises(ValidationError):
        small_manifest(method="multigrid")
    with pytest.raises(ValidationError):
        small_manifest(wetting=True, gamma_vs=1.5, gamma_fs=0.0)
    with pytest.raises(ValidationError):
        small_manifest(t_end=-1.0)
    with pytest.raises(ValidationError):
        small_manifest(kind="from_snapshot")


def test_resolved_fields():
    m = small_manifest()
    assert m.resolved_center_x() == 0.5
    assert small_manifest(center_x=0.3).resolved_center_x() == 0.3
    assert m.resolved_probe_height() == 0.1
    drop = small_manifest(kind="droplet", radius=0.15)
    assert drop.resolved_probe_height() is None


def test_xi_defaults_to_epsilon():
    m = small_manifest(wetting=True, gamma_vs=0.5, epsilon=0.1, xi=0.0)
    assert m.params().xi == pytest.approx(0.1)
    m = small_manifest(wetting=True, gamma_vs=0.5, xi=0.07)
    assert m.params().xi == 0.07


# ---------------------------------------------------------------------------
# INI round trip
# ---------------------------------------------------------------------------

def test_parse_emit_round_trip():
    m = small_manifest(label="abc", gamma_vs=0.25, wetting=True,
                       tau_init=1e-9)
    again = parse_manifest(emit_manifest(m))
    assert again == m
    # emitted text is stable under a second round trip (cache keys rely
    # on this)
    assert emit_manifest(again) == emit_manifest(m)


def test_parse_rejects_unknown_section_and_key():
    m = small_manifest()
    with pytest.raises(ParseError):
        parse_manifest(emit_manifest(m) + "\n[turbo]\nboost = 11\n")
    with pytest.raises(ParseError):
        parse_manifest(emit_manifest(m).replace("epsilon =", "epsilonn ="))
    with pytest.raises(ParseError):
        parse_manifest(emit_manifest(m).replace("tau = ", "tau = not_a_number #"))
    with pytest.raises(ParseError):
        parse_manifest("not an ini file [")


def test_parse_bool_spellings():
    m = small_manifest()
    for raw, want in (("true", True), ("off", False), ("1", True), ("no", False)):
        text = emit_manifest(m).replace("use_g = false", f"use_g = {raw}")
        assert parse_manifest(text).use_g is want


# ---------------------------------------------------------------------------
# Environment overrides
# ---------------------------------------------------------------------------

def test_env_overrides():
    m = small_manifest()
    out = apply_env_overrides(m, environ={"DEWET_SCHEDULE_TAU": "0.002",
                                          "DEWET_MODEL_EPSILON": "0.2",
                                          "DEWET_SOLVER_METHOD": "bicgstab"})
    assert out.tau == 0.002
    assert out.epsilon == 0.2
    assert out.method == "bicgstab"
    # untouched manifest instance, no overrides -> same object back
    assert apply_env_overrides(m, environ={}) is m


def test_env_override_is_validated():
    m = small_manifest()
    with pytest.raises(ValidationError):
        apply_env_overrides(m, environ={"DEWET_MODEL_EPSILON": "0.001"})


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def test_preset_names_and_unknown():
    assert set(PRESET_TAUS) <= set(PRESET_NAMES)
    with pytest.raises(UnknownPreset):
        preset("no_such_study")
    with pytest.raises(UnknownPreset):
        preset_run_manifest("no_such_study", "ros2", 0.1)
    with pytest.raises(UnknownPreset):
        reference_manifest("wetting_60")


def test_convergence_presets_validate():
    for name in PRESET_TAUS:
        scheme = PRESET_SCHEME[name]
        runs = preset(name)
        assert runs[0].label == "reference"
        assert runs[0].alpha == 0.0
        for m, tau in zip(runs[1:], PRESET_TAUS[name]):
            assert m.scheme == scheme
            assert m.tau == tau
        taus = PRESET_TAUS[name]
        assert all(a < b for a, b in zip(taus, taus[1:]))


def test_sie_preset_spans_order_window():
    taus = PRESET_TAUS["fig_convergence_sie"]
    assert min(taus) <= 4e-4 and max(taus) >= 3e-2


def test_ros34pw2_preset_brackets_stability_ceiling():
    # the four-stage scheme blows up around tau ~ 1e-2 on the retracting
    # step; the sweep must sample both sides of that ceiling
    taus = PRESET_TAUS["fig_convergence_ros34pw2"]
    assert min(taus) <= 2e-3
    assert max(taus) >= 3e-2


def test_tip_scaling_preset():
    a, b = preset("fig_tip_scaling")
    assert a.use_g is True and b.use_g is False
    assert a.mode == b.mode == "adaptive"
    assert a.scheme in ("ros2", "ros34pw2")


def test_wetting_presets():
    (m60,) = preset("wetting_60")
    (m120,) = preset("wetting_120")
    assert m60.wetting and m120.wetting
    assert m60.gamma_vs - m60.gamma_fs == pytest.approx(0.5)
    assert m120.gamma_vs - m120.gamma_fs == pytest.approx(-0.5)
    assert math.degrees(math.acos(m60.gamma_vs - m60.gamma_fs)) == pytest.approx(60.0)
    assert m60.mode == "fixed"  # adaptive stepping freezes the contact line
    assert m60.kind == "droplet"


def test_island_preset():
    (m,) = preset("island_2d_adaptive")
    assert m.mode == "adaptive"
    assert m.scheme == "ros34pw2"
    assert m.kind == "square_island_2d"


# ---------------------------------------------------------------------------
# Command-line entry point
# ---------------------------------------------------------------------------

def test_main_validate_ok(tmp_path):
    path = tmp_path / "m.ini"
    path.write_text(emit_manifest(small_manifest()))
    assert main(["validate", "--manifest", str(path)]) == 0


def test_main_validate_parse_error(tmp_path, capsys):
    path = tmp_path / "m.ini"
    path.write_text("[grid]\nlx = banana\n")
    assert main(["validate", "--manifest", str(path)]) == 2
    assert "category=ParseError" in capsys.readouterr().err


def test_main_validate_validation_error(tmp_path, capsys):
    path = tmp_path / "m.ini"
    path.write_text(emit_manifest(small_manifest()).replace(
        "scheme = ros2", "scheme = leapfrog"))
    assert main(["validate", "--manifest", str(path)]) == 2
    assert "category=ValidationError" in capsys.readouterr().err


def test_main_preset_list(capsys):
    assert main(["preset-list"]) == 0
    names = capsys.readouterr().out.split()
    assert set(names) == set(PRESET_NAMES)


def test_main_self_test(tmp_path, capsys):
    assert main(["run", "--self-test", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "ros2" in out and "ros34pw2" in out
    assert (tmp_path / "self_test.txt").exists()


def test_main_run_missing_manifest(capsys):
    assert main(["run"]) == 2
    assert "category=ParseError" in capsys.readouterr().err


def test_main_report_missing(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 3
    assert "category=MissingReport" in capsys.readouterr().err


def test_main_run_writes_run_dir(tmp_path, capsys):
    path = tmp_path / "m.ini"
    m = small_manifest(label="smoke")
    path.write_text(emit_manifest(m))
    assert main(["run", "--manifest", str(path), "--out", str(tmp_path)]) == 0
    run_dir = tmp_path / "smoke"
    names = sorted(os.listdir(run_dir))
    assert names == ["final_u.csv", "manifest.ini", "trajectory.csv"]
    # the resolved manifest in the run dir reproduces the run
    again = parse_manifest((run_dir / "manifest.ini").read_text())
    assert again == replace(m, out_dir=str(tmp_path))
    field = read_field(run_dir / "final_u.csv")
    assert field.grid.shape == (m.nx, m.ny)
    assert np.all(np.isfinite(field.data))


def test_main_run_bitwise_reproducible(tmp_path, capsys):
    path = tmp_path / "m.ini"
    path.write_text(emit_manifest(small_manifest(label="rep")))
    for sub in ("a", "b"):
        assert main(["run", "--manifest", str(path),
                     "--out", str(tmp_path / sub), "--deterministic"]) == 0
    a = (tmp_path / "a" / "rep" / "final_u.csv").read_bytes()
    b = (tmp_path / "b" / "rep" / "final_u.csv").read_bytes()
    assert a == b
    ta = (tmp_path / "a" / "rep" / "trajectory.csv").read_bytes()
    tb = (tmp_path / "b" / "rep" / "trajectory.csv").read_bytes()
    assert ta == tb


def test_main_report_round_trip(tmp_path, capsys):
    (tmp_path / "summary.txt").write_text("angle=60.0\n")
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert "angle=60.0" in capsys.readouterr().out


def test_run_manifest_env_override(tmp_path, capsys, monkeypatch):
    path = tmp_path / "m.ini"
    path.write_text(emit_manifest(small_manifest(label="env")))
    monkeypatch.setenv("DEWET_SCHEDULE_T_END", "0.01")
    assert main(["run", "--manifest", str(path), "--out", str(tmp_path)]) == 0
    from dewet.integrators import Trajectory
    traj = Trajectory.from_csv(tmp_path / "env" / "trajectory.csv")
    assert traj.column("time")[-1] == pytest.approx(0.01, abs=1e-12)
