import math

import numpy as np
import pytest

from switchlayer.integrate import (
    EventKind, IntegrationError, IntegratorConfig, Mode, integrate_free, integrate_sliding, simulate,
    Trajectory,
)
from switchlayer.layer import SlideExit, find_sliding_roots
from switchlayer.model import SwitchedSystem
from switchlayer.scenarios import get

CFG = IntegratorConfig()


def seq(traj):
    return [m.value for m in traj.mode_sequence()]


def test_example1a_slides_down():
    sc = get("example1a")
    tr = simulate(sc.system, sc.x0, sc.t_span)
    assert seq(tr) == ["free+", "sliding"]
    assert tr.events[0].t == pytest.approx(0.3, abs=1e-9)
    sl = [i for i, m in enumerate(tr.mode) if m is Mode.SLIDING]
    assert np.allclose(tr.lam[sl], 0.0, atol=1e-12)
    assert tr.x[-1, 1] == pytest.approx(0.3 - 4.7, abs=1e-8)


def test_example2b_crosses_once():
    sc = get("example2b")
    tr = simulate(sc.system, sc.x0, sc.t_span)
    assert seq(tr) == ["free-", "free+"]
    assert tr.event_kinds() == [EventKind.SURFACE_HIT, EventKind.CROSS_EXIT]
    assert tr.events[0].t == pytest.approx(0.5, abs=1e-9)


def test_example2a_sticks():
    sc = get("example2a")
    tr = simulate(sc.system, sc.x0, sc.t_span)
    assert seq(tr) == ["free-", "sliding"]
    i = tr.mode.index(Mode.SLIDING)
    assert tr.lam[-1] == pytest.approx(-1 / math.sqrt(2), abs=1e-10)
    rate = (tr.x[-1, 1] - tr.x[i, 1]) / (tr.t[-1] - tr.t[i])
    assert rate == pytest.approx(1 / math.sqrt(2), abs=1e-8)


def test_free_hit_location_exact_linear_flow():
    s = get("example2b").system
    seg, hit = integrate_free(s, [-0.5, 0.0], 0.0, 2.0, -1, CFG)
    assert hit.t == pytest.approx(0.5, abs=1e-10)
    assert abs(s.hval(hit.x)) <= CFG.event_tol
    assert all(x1 < 0 for x1 in seg.x[:, 0])


def test_free_receding_runs_to_horizon():
    s = SwitchedSystem.from_text(1, "x1", ["1"])
    seg, hit = integrate_free(s, [0.5], 0.0, 3.0, 1, CFG)
    assert hit is None and seg.t[-1] == 3.0 and seg.x[-1, 0] == pytest.approx(3.5)


def test_free_wrong_side():
    s = SwitchedSystem.from_text(1, "x1", ["1"])
    with pytest.raises(ValueError):
        integrate_free(s, [0.5], 0.0, 1.0, -1, CFG)


def test_forced_oscillator_first_hit():
    s = get("oscillator_nonlinear").system
    seg, hit = integrate_free(s, [1.0, 0.0], 0.0, 200.0, 1, CFG)
    assert hit is not None
    assert abs(hit.x[0]) <= 1e-10


def test_sliding_example1a_from_surface():
    s = get("example1a").system
    (root,) = find_sliding_roots(s, [0.0, 5.0], 0.0)
    seg, exit_kind, t, x, _ = integrate_sliding(s, [0.0, 5.0], 0.0, 3.0, root, CFG)
    assert exit_kind is SlideExit.HORIZON
    assert x[1] == pytest.approx(2.0, abs=1e-10)


def test_sliding_boundary_exit():
    s = SwitchedSystem.from_text(1, "x1", ["lam - t"])
    (root,) = find_sliding_roots(s, [0.0], 0.0)
    seg, exit_kind, t, _, _ = integrate_sliding(s, [0.0], 0.0, 3.0, root, CFG)
    assert exit_kind is SlideExit.BOUNDARY_PLUS
    assert t == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(seg.lam, seg.t, atol=1e-9)


def test_boundary_exit_continues_free():
    # attracting lam* = t/2 reaches +1 at t = 2; beyond it the + field lifts off the surface
    s = SwitchedSystem.from_text(2, "x1", ["t/2 - lam", "1"])
    tr = simulate(s, [0.0, 0.0], (0.0, 3.0), lam0=0.0)
    assert seq(tr) == ["sliding", "free+"]
    kinds = tr.event_kinds()
    assert EventKind.SLIDE_END_BOUNDARY in kinds
    assert tr.events[kinds.index(EventKind.SLIDE_END_BOUNDARY)].t == pytest.approx(2.0, abs=1e-8)


def test_hidden_vdp_oscillates_inside_surface():
    sc = get("hidden_vdp")
    tr = simulate(sc.system, sc.x0, (0.0, 40.0))
    assert seq(tr) == ["free+", "sliding"]
    kinds = tr.event_kinds()
    assert kinds.count(EventKind.SLIDE_END_FOLD) >= 3
    sl = np.array([m is Mode.SLIDING for m in tr.mode])
    # pinned to the surface
    assert np.max(np.abs(tr.x[sl, 0])) <= 10 * CFG.event_tol
    assert np.max(np.abs(tr.lam[sl])) <= 1.0


def test_filippov_vdp_settles():
    from switchlayer.scenarios import filippov_variant
    sc = filippov_variant(get("hidden_vdp"))
    tr = simulate(sc.system, sc.x0, (0.0, 100.0))
    assert abs(tr.x[-1, 1]) < 1e-3


def test_mode_field_consistency():
    sc = get("oscillator_linear")
    cfg = IntegratorConfig(method="rk4_fixed", step=1e-3)
    tr = simulate(sc.system, sc.x0, (0.0, 6.0), cfg)
    t, x, modes = tr.t, tr.x, tr.mode
    lip = 3.0 + 1.5 * math.pi
    checked = 0
    for i in range(len(t) - 1):
        if modes[i] is modes[i + 1] and modes[i] in (Mode.FREE_PLUS, Mode.FREE_MINUS):
            dt = t[i + 1] - t[i]
            if dt < 1e-6:
                continue
            v = (x[i + 1] - x[i]) / dt
            side = 1.0 if modes[i] is Mode.FREE_PLUS else -1.0
            f = sc.system.field(x[i], t[i], side)
            assert np.max(np.abs(v - f)) <= 10 * dt * lip * (1 + np.max(np.abs(f)))
            checked += 1
    assert checked > 1000


def test_mode_sign_invariants():
    sc = get("oscillator_nonlinear")
    tr = simulate(sc.system, sc.x0, (0.0, 20.0))
    h = tr.x[:, 0]
    for hv, m, lam in zip(h, tr.mode, tr.lam):
        if m is Mode.FREE_PLUS:
            assert hv > 0
        elif m is Mode.FREE_MINUS:
            assert hv < 0
        else:
            assert abs(hv) <= 1e-9 and -1 <= lam <= 1
    assert np.all(np.diff(tr.t) > 0)


def test_crossing_uses_one_sided_fields():
    s = get("example2b").system
    tr = simulate(s, [-0.5, 0.0], (0.0, 2.0))
    hit = tr.events[0]
    i = int(np.searchsorted(tr.t, hit.t))
    x_after, t_after = tr.x[i], tr.t[i]
    tau = t_after - hit.t
    # the nudge moves along f+ from the located surface point
    x_hit = x_after - tau * s.field(x_after, hit.t, 1.0)
    assert abs(x_hit[0]) <= 1e-8
    assert np.allclose((tr.x[i + 1] - x_after) / (tr.t[i + 1] - t_after), s.field(x_after, t_after, 1.0), atol=1e-8)


def test_slide_start_paired():
    sc = get("hidden_vdp")
    tr = simulate(sc.system, sc.x0, (0.0, 30.0))
    open_slide = False
    for e in tr.events:
        if e.kind is EventKind.SLIDE_START:
            assert not open_slide
            open_slide = True
        elif e.kind in (EventKind.SLIDE_END_FOLD, EventKind.SLIDE_END_BOUNDARY):
            assert open_slide
            open_slide = False


def test_deterministic():
    sc = get("oscillator_nonlinear")
    a = simulate(sc.system, sc.x0, (0.0, 10.0))
    b = simulate(sc.system, sc.x0, (0.0, 10.0))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.x, b.x) and a.events == b.events


def test_rk4_fixed_agrees_with_rk45():
    sc = get("example2a")
    a = simulate(sc.system, sc.x0, sc.t_span, IntegratorConfig(method="rk4_fixed", step=1e-3))
    b = simulate(sc.system, sc.x0, sc.t_span)
    assert np.allclose(a.x[-1], b.x[-1], atol=1e-9)


def test_repelled_boundary_exit_crosses():
    # a repelling root drifting to +1 leaves the + field pointing back in: cross to the - side
    s = SwitchedSystem.from_text(2, "x1", ["lam - t/2", "1"])
    tr = simulate(s, [0.0, 0.0], (0.0, 3.0), lam0=0.0)
    assert seq(tr)[0] == "sliding" and seq(tr)[-1] == "free-"
    assert EventKind.CROSS_EXIT in tr.event_kinds()


def test_degenerate_halt():
    # fast flow from lam = +1 runs into the double root lam = 1/2
    s = SwitchedSystem.from_text(2, "x1", ["-(lam - 0.5)^2", "1"])
    tr = simulate(s, [1.0, 0.0], (0.0, 10.0))
    assert tr.status == "halted"
    assert tr.events[-1].kind is EventKind.DEGENERATE_HALT


def test_max_events_cap():
    sc = get("hidden_vdp")
    tr = simulate(sc.system, sc.x0, sc.t_span, IntegratorConfig(max_events=3))
    assert tr.status == "max_events" and len(tr.events) == 3


def test_domain_error_reported():
    s = SwitchedSystem.from_text(1, "x1", ["-sqrt(x1 - 1.5)"])
    with pytest.raises(IntegrationError):
        simulate(s, [2.0], (0.0, 3.0))


@pytest.mark.parametrize("kw", [dict(step=0), dict(rel_tol=-1), dict(method="euler"), dict(max_events=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_trajectory_arrays_track_appends():
    tr = Trajectory(1)
    tr.append(0.0, [1.0], 1.0, Mode.FREE_PLUS)
    t0 = tr.t
    assert tr.t is t0
    tr.append(1.0, [2.0], 1.0, Mode.FREE_PLUS)
    assert list(tr.t) == [0.0, 1.0] and tr.x.shape == (2, 1)
    with pytest.raises(ValueError):
        tr.x[0, 0] = 5.0
