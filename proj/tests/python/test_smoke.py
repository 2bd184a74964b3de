"""End-to-end smoke tests for the python bindings (kept cheap: SMIB only)."""

import pytest

import cctkit


def smib():
    c = cctkit.builtin_case("smib")
    return c, c.default_scenario


def test_module_surface():
    assert cctkit.__version__
    assert set(cctkit.builtin_case_names()) == {"smib", "ieee39_sync", "ieee39_gfl2"}


def test_case_introspection():
    c, s = smib()
    assert c.name == "smib"
    assert c.n_buses == 2 and c.n_branches == 2
    assert c.n_sync == 2 and c.n_gfl == 0
    assert c.find_branch(2, 1) == 1
    assert s.fault_bus == 1 and s.tripped_branch == 1
    assert s.clearing_time == pytest.approx(s.t1 + s.t_cl)
    assert "smib" in repr(c)
    assert c.to_json().startswith("{")


def test_simulate_and_classify():
    c, s = smib()
    traj = cctkit.simulate(c, s)
    n = round(s.horizon / s.dt) + 1
    assert len(traj) == n
    assert traj.states.shape == (n, traj.layout.nx)
    assert traj.bus_voltages.shape == (n, c.n_buses)
    assert traj.times[traj.fault_on_index] == pytest.approx(s.t1)
    assert traj.times[traj.clearing_index] == pytest.approx(s.t1 + s.t_cl)
    assert traj.component_name(0, c).startswith("delta")

    verdict = cctkit.classify_stability(traj)
    assert verdict.stable
    assert verdict.first_violation_time is None

    csv = cctkit.trajectory_csv(traj, c)
    assert csv.startswith("t,")

    s.t_cl = 0.30
    late = cctkit.classify_stability(cctkit.simulate(c, s))
    assert not late.stable
    assert late.first_violation_time > s.t1 + s.t_cl


def test_bisect_and_estimate_agree():
    c, s = smib()
    bracket = cctkit.bisect_cct(c, s, (0.1, 0.7), tol=0.01)
    assert bracket.upper - bracket.lower <= 0.01 + 1e-12
    assert bracket.evaluations >= 4
    # endpoint verification first; probes are snapped onto the dt grid
    assert bracket.log[0][0] == pytest.approx(0.1) and bracket.log[0][1] is True
    assert bracket.log[1][0] == pytest.approx(0.7) and bracket.log[1][1] is False

    probes = cctkit.auto_probes(c, s)
    assert probes[0] < probes[1] < bracket.lower

    est = cctkit.estimate_cct(c, s, probes)
    assert est.probes == probes
    assert [f.fleet for f in est.fleets] == ["sync"]
    assert est.system_fleet == "sync"
    assert est.t_cr_system == pytest.approx(
        0.5 * (bracket.lower + bracket.upper), abs=0.03
    )
    assert "t_cr_system" in cctkit.estimate_json(est)


def test_sensitivity_series():
    c, s = smib()
    sens = cctkit.sensitivity_variational(c, s)
    assert not sens.truncated
    assert sens.base_t_cl == pytest.approx(s.t_cl)
    assert sens.w.shape[1] == sens.layout.nx
    assert sens.elapsed[0] == 0.0

    series = cctkit.sn_sync(sens, c)
    assert series.fleet == "sync"
    assert len(series.values) == len(sens)
    m = cctkit.peak(series)
    assert m.value > 0.0
    assert cctkit.peak_in_window(series, (0.0, 1.0)).value <= m.value
    assert cctkit.sensitivity_csv(sens, c, [series]).startswith("s,")


def test_extrapolation_arithmetic():
    root = cctkit.extrapolate_root(0.35, 0.0012491, 0.37, 0.00087607)
    assert root == pytest.approx(0.4171, abs=5e-4)


def test_errors_map_to_cctkit_error():
    c, s = smib()
    with pytest.raises(cctkit.CctkitError):
        cctkit.builtin_case("no_such_case")
    with pytest.raises(cctkit.CctkitError, match="differ"):
        cctkit.estimate_cct(c, s, (0.2, 0.2))
    s.t_cl = 0.1234  # off the dt grid
    with pytest.raises(cctkit.CctkitError, match="grid"):
        cctkit.simulate(c, s)


def test_cli_entry_point(capfd):
    assert cctkit.cli_main(["case", "--list"]) == 0
    out = capfd.readouterr().out
    assert "smib" in out and "ieee39_gfl2" in out
