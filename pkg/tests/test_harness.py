import numpy as np
import pytest

from mvsde import (ConfigurationError, ErrorRow, ErrorTable, FitError,
                   NoisePlan, SchemeParams, export_density,
                   export_phase_means, fit_rate, make_builtin,
                   path_strong_error, poc_error, strong_error)


def table_from(pairs, metric="strong_rmse"):
    t = ErrorTable(metric=metric)
    t.rows = [ErrorRow(p, e, 10) for p, e in pairs]
    return t


def test_fit_rate_exact_power_laws():
    hs = [1e-3, 2e-3, 5e-3, 1e-2]
    for target in (1.0, 0.5):
        t = table_from([(h, 3.0 * h ** target) for h in hs])
        slope, intercept, r2 = fit_rate(t)
        assert slope == pytest.approx(target, abs=1e-12)
        assert intercept == pytest.approx(np.log(3.0), abs=1e-12)
        assert r2 == pytest.approx(1.0)


def test_fit_rate_skips_diverged_and_requires_three():
    t = table_from([(1e-3, 1e-3), (2e-3, 2e-3), (5e-3, 5e-3)])
    t.rows.append(ErrorRow(1e-2, float("inf"), 10, diverged=True))
    slope, _, _ = fit_rate(t)
    assert slope == pytest.approx(1.0, abs=1e-12)
    t2 = table_from([(1e-3, 1e-3), (2e-3, 2e-3)])
    with pytest.raises(FitError):
        fit_rate(t2)


def test_zero_error_at_equal_resolution():
    m = make_builtin("double_well")
    t = strong_error(m, "ssm", [0.01, 0.02, 0.05], 0.01, 8, 0.2, seed=0)
    finest = min(t.rows, key=lambda r: r.parameter)
    assert finest.parameter == 0.01
    assert finest.error == 0.0


def test_poc_zero_error_at_proxy_size():
    m = make_builtin("granular_media")
    t = poc_error(m, "ssm", [4, 8, 16], 16, 0.05, 0.2, seed=0)
    biggest = max(t.rows, key=lambda r: r.parameter)
    assert biggest.error == 0.0
    smaller = min(t.rows, key=lambda r: r.parameter)
    assert smaller.error > 0.0


def test_path_error_dominates_terminal_error():
    m = make_builtin("double_well")
    kw = dict(h_list=[5e-3, 1e-2, 2e-2], h_proxy=1e-3, N=32, T=0.5, seed=3)
    term = strong_error(m, "ssm", **kw)
    path = path_strong_error(m, "ssm", **kw)
    for rt, rp in zip(sorted(term.rows, key=lambda r: r.parameter),
                      sorted(path.rows, key=lambda r: r.parameter)):
        assert rp.error >= rt.error - 1e-15


def test_strong_error_thread_determinism():
    m = make_builtin("double_well")
    kw = dict(h_list=[5e-3, 1e-2, 2.5e-2], h_proxy=2.5e-3, N=16, T=0.2, seed=1)
    seq = strong_error(m, "ssm", threads=1, **kw)
    par = strong_error(m, "ssm", threads=4, **kw)
    for a, b in zip(seq.rows, par.rows):
        assert a.parameter == b.parameter
        assert a.error == b.error
    assert seq.fitted_slope == par.fitted_slope


def test_strong_error_validates_grids():
    m = make_builtin("double_well")
    with pytest.raises(ConfigurationError):
        strong_error(m, "ssm", [0.01], 0.02, 8, 0.2, seed=0)
    with pytest.raises(ConfigurationError):
        strong_error(m, "ssm", [0.015, 0.01, 0.05], 0.01, 8, 0.2, seed=0)


def test_newton_stats_populated_for_ssm():
    m = make_builtin("double_well")
    t = strong_error(m, "ssm", [0.01, 0.02, 0.05], 0.005, 8, 0.2, seed=0)
    assert t.newton_stats["solves"] > 0
    assert t.newton_stats["median_iterations"] >= 1


def test_preasymptotic_guard_excludes_outlier():
    hs = [1e-3, 2e-3, 5e-3, 1e-2]
    t = table_from([(h, h) for h in hs[:-1]] + [(hs[-1], 1e3)])
    from mvsde.harness import _finalise_fit
    t = _finalise_fit(t)
    assert t.excluded == [1e-2]
    assert t.fitted_slope == pytest.approx(1.0, abs=1e-12)


def test_density_masses_sum_to_one():
    m = make_builtin("double_well")
    plan = NoisePlan(4, 64, 1, 0.01, 20)
    p = SchemeParams(T=0.2, M=20, N=64, scheme="ssm")
    table = export_density(m, "ssm", p, plan, times=[0.0, 0.1, 0.2], bins=12)
    for masses_t in table.masses:
        for masses_c in masses_t:
            assert np.sum(masses_c) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        export_density(m, "ssm", p, plan, times=[0.013])


def test_phase_means_shape_and_d_check():
    m = make_builtin("van_der_pol")
    plan = NoisePlan(4, 16, 2, 0.01, 10)
    p = SchemeParams(T=0.1, M=10, N=16, scheme="ssm")
    times, means = export_phase_means(m, "ssm", p, plan)
    assert means.shape == (11, 2)
    assert len(times) == 11
    dw = make_builtin("double_well")
    plan1 = NoisePlan(4, 16, 1, 0.01, 10)
    with pytest.raises(ConfigurationError):
        export_phase_means(dw, "ssm", p, plan1)


def test_poc_error_trends_down_with_n():
    # individual rows are noisy at this batch size, so check the fitted
    # trend instead of pairwise monotonicity
    m = make_builtin("granular_media")
    t = poc_error(m, "ssm", [8, 16, 32, 64, 128], 256, 0.02, 0.5, seed=0,
                  x0=((2.0, 9.0),))
    assert t.fitted_slope < 0.0
    assert all(r.error > 0 for r in t.rows)
