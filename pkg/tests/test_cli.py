import math

import numpy as np
import pytest

from nvesynth.cli import ConfigError, format_config, main, parse_config, read_metadata, run_scenario
from nvesynth.model import SystemParams


def rows_of(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return lines[0], [list(map(float, ln.split(","))) for ln in lines[1:]]


# --------------------------------------------------------------------------
# config parsing


def test_empty_document_needs_scenario():
    with pytest.raises(ConfigError, match="scenario missing"):
        parse_config("")


def test_fig2_defaults():
    cfg = parse_config("scenario = fig2")
    p = cfg.params
    assert (p.g_m, p.g_c, p.Omega, p.N, p.Delta) == (0.1, 10.0, 1.0, 1e4, 100.0)
    assert cfg.sweep is None and not cfg.fixed
    assert cfg.cavity_dim == 3
    assert cfg.t_max == pytest.approx(3 * math.pi)


def test_malformed_number_names_key():
    with pytest.raises(ConfigError, match="Delta"):
        parse_config("scenario = fig2\nDelta = abc")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="line 2: unknown key 'foo'"):
        parse_config("scenario = fig2\nfoo = 1")


def test_unknown_scenario():
    with pytest.raises(ConfigError, match="unknown scenario"):
        parse_config("scenario = fig9")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("scenario = fig2\nDelta = 1\nDelta = 2")


@pytest.mark.parametrize("sweep", ["Delta 1 2", "Delta 1 2 1", "foo 1 2 3", "Delta a 2 3"])
def test_invalid_sweeps(sweep):
    with pytest.raises(ConfigError, match="sweep"):
        parse_config(f"scenario = fig4b\nsweep = {sweep}")


def test_comments_and_blank_lines():
    cfg = parse_config("# a run\n\nscenario = fig4b   # detuning scan\nsweep = Delta 60 100 3\n")
    assert cfg.sweep == ("Delta", 60.0, 100.0, 3)


def test_integer_option_must_be_integral():
    with pytest.raises(ConfigError, match="cavity_dim: expected an integer"):
        parse_config("scenario = fig5\ncavity_dim = 3.5")


def test_ghz_units():
    cfg = parse_config("scenario = fig4b\nunits = GHz\nDelta = 15\ng_c = 1.5\nOmega = 0.15\ng_m = 0.015")
    p = cfg.params
    assert p.Delta == pytest.approx(100.0)
    assert p.g_c == pytest.approx(10.0)
    assert p.Omega == pytest.approx(1.0)
    assert p.g_m == pytest.approx(0.1)
    # dimensionless keys are not scaled
    assert p.N == 1e4


def test_ghz_units_scale_sweep():
    cfg = parse_config("scenario = fig4b\nunits = GHz\nsweep = Delta 6 30 3")
    assert cfg.sweep[1:3] == pytest.approx((40.0, 200.0))


def test_format_round_trip():
    cfg = parse_config("scenario = synth\ntarget = random 1 2\nseed = 5\nDelta = 80\nsweep = none\noutput = x.csv")
    assert parse_config(format_config(cfg)) == cfg


def test_unwritable_path(tmp_path):
    cfg = parse_config(f"scenario = synth\noutput = {tmp_path / 'missing' / 'x.csv'}")
    with pytest.raises(ConfigError, match="does not exist"):
        run_scenario(cfg)


# --------------------------------------------------------------------------
# scenarios


def test_fig2_header_and_population_bound(tmp_path):
    out = tmp_path / "fig2.csv"
    cfg = parse_config(f"scenario = fig2\noutput = {out}\npoints = 61")
    run_scenario(cfg)
    header, rows = rows_of(out)
    assert header == "t,P1_full,P2_full,P1_eff,P2_eff"
    rows = np.array(rows)
    assert len(rows) == 2 * 61
    assert np.all(rows[:, 1] + rows[:, 2] <= 1 + 1e-9)
    assert "## block Delta = 100.0" in out.read_text()


def test_synth_vacuum(tmp_path):
    out = tmp_path / "s.csv"
    run_scenario(parse_config(f"scenario = synth\ntarget = vacuum\noutput = {out}"))
    header, rows = rows_of(out)
    assert header.split(",")[-1] == "fidelity"
    # only the starting row, no schedule steps
    assert len(rows) == 1
    assert rows[0][-1] == 1.0


def test_synth_explicit_target(tmp_path):
    out = tmp_path / "s.csv"
    run_scenario(parse_config(f"scenario = synth\ntarget = 0 0 1 0; 1 1 0 1\noutput = {out}"))
    _, rows = rows_of(out)
    assert rows[-1][-1] >= 1 - 1e-9


def test_fig4b_at_hundred(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["--scenario", "fig4b", "--delta-over-g", "100", "--out", str(out)]) == 0
    header, rows = rows_of(out)
    assert header == "Delta_over_g,fidelity"
    assert len(rows) == 1
    assert rows[0][0] == 100.0
    assert rows[0][1] >= 0.99


def test_noon_columns():
    table = run_scenario(parse_config("scenario = noon\nn_max = 2"), write=False)
    assert table.columns[:5] == ["N", "fidelity_shortcut", "fidelity_synthesized", "time_shortcut", "time_worst_case"]
    assert table.column("fidelity_shortcut")[0] >= 1 - 1e-9


def test_ecs_columns():
    table = run_scenario(parse_config("scenario = ecs\npoints = 5"), write=False)
    assert table.columns[0] == "t"
    assert len(table.rows) == 5
    assert np.all(table.column("fidelity") >= 1 - 1e-6)


def test_metadata_round_trip(tmp_path):
    out = tmp_path / "m.csv"
    cfg = parse_config(f"scenario = synth\ntarget = uniform 1 1\nseed = 3\ng1 = 0.8\noutput = {out}")
    run_scenario(cfg)
    assert read_metadata(out) == cfg
    text = out.read_text()
    for key in ("g_c", "g_m", "Omega", "Delta", "N", "lam", "cavity_dim", "mode_dim"):
        assert f"# {key} = " in text
    assert "## version = " in text


def test_deterministic_output(tmp_path):
    path = tmp_path / "a.csv"
    runs = []
    for _ in range(2):
        run_scenario(parse_config(f"scenario = synth\ntarget = random 2 1\nseed = 11\noutput = {path}"))
        runs.append(path.read_bytes())
    assert runs[0] == runs[1]


def test_seed_changes_random_target(tmp_path):
    a = run_scenario(parse_config("scenario = synth\ntarget = random 2 1\nseed = 1"), write=False)
    b = run_scenario(parse_config("scenario = synth\ntarget = random 2 1\nseed = 2"), write=False)
    assert a.rows != b.rows


def test_validity_warning_is_logged(tmp_path, caplog):
    out = tmp_path / "w.csv"
    assert main(["--scenario", "fig4b", "--delta-over-g", "5", "--out", str(out)]) == 0
    msgs = [r.getMessage() for r in caplog.records if r.levelname == "WARNING"]
    assert any("cavity elimination" in m for m in msgs)


# --------------------------------------------------------------------------
# entry point


def test_main_exit_codes(tmp_path, capsys):
    assert main([]) == 2
    assert "scenario missing" in capsys.readouterr().err
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scenario = synth\nDelta = oops\n")
    assert main(["--config", str(cfg)]) == 2
    assert "Delta" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "nope.cfg")]) == 2


def test_main_config_with_overrides(tmp_path):
    cfg = tmp_path / "c.cfg"
    out = tmp_path / "o.csv"
    cfg.write_text("scenario = synth\ntarget = random 1 1\nseed = 0\n")
    assert main(["--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    assert read_metadata(out).seed == 4


def test_flag_on_non_swept_axis_keeps_sweep(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["--scenario", "fig4a", "--delta-over-g", "120", "--out", str(out)]) == 0
    meta = read_metadata(out)
    assert meta.params.Delta == 120.0
    assert not meta.fixed
    _, rows = rows_of(out)
    assert [r[0] for r in rows] == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_parameters_validated():
    with pytest.raises(ConfigError, match="params"):
        parse_config("scenario = fig2\nN = -1")


def test_default_params_are_system_defaults():
    assert parse_config("scenario = fig4a").params == SystemParams()
