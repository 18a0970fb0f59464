import math

import numpy as np
import pytest

from epimtl.mtl import (
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    MtlError,
    MtlSyntaxError,
    MtlTrue,
    Not,
    Or,
    TimeIndexInterval,
    Trajectory,
    TrajectoryTooShortError,
    Until,
    eval_bool,
    eval_robustness,
    format_formula,
    horizon,
    parse_formula,
    smooth_robustness,
    smooth_robustness_grad,
    _soft_min,
)

from helpers import CHANNELS, oracle_eval, random_formula, random_instance, soft_error_bound

SEIR_CHANNELS = {"I", "E", "S", "R", "D", "dD", "N"}


def traj(**channels):
    return Trajectory(ts=1.0, channels=channels)


# ---------------------------------------------------------------------------
# Parsing


def test_parse_vaccination_spec_structure():
    text = "G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)"
    phi = parse_formula(text, SEIR_CHANNELS)
    expected = And(
        And(
            Always(TimeIndexInterval(0, 100), Atom("dD", "<=", 0.001)),
            Always(TimeIndexInterval(0, 100), Atom("D", "<=", 0.05)),
        ),
        Eventually(TimeIndexInterval(40, 60), Atom("R", ">=", 6.0)),
    )
    assert phi == expected


def test_parse_true_and_until():
    assert parse_formula("TRUE", set()) == TRUE
    phi = parse_formula("(a <= 1) U[2,5] (b >= 3)", {"a", "b"})
    assert phi == Until(TimeIndexInterval(2, 5), Atom("a", "<=", 1.0), Atom("b", ">=", 3.0))


def test_parse_precedence():
    phi = parse_formula("!a <= 1 & b >= 2 | c <= 3", {"a", "b", "c"})
    assert phi == Or(
        And(Not(Atom("a", "<=", 1.0)), Atom("b", ">=", 2.0)), Atom("c", "<=", 3.0)
    )
    # until binds loosest, right-associative
    phi = parse_formula("a <= 1 | b >= 2 U[0,1] c <= 3 U[2,3] a >= 0", {"a", "b", "c"})
    assert isinstance(phi, Until)
    assert isinstance(phi.left, Or)
    assert isinstance(phi.right, Until)


def test_parse_channel_named_like_operators():
    # U/G/F act as operators only when directly followed by an interval.
    phi = parse_formula("U >= 1", {"U"})
    assert phi == Atom("U", ">=", 1.0)
    phi = parse_formula("(U >= 1) U[0,2] (U <= 3)", {"U"})
    assert isinstance(phi, Until)


def test_parse_errors_carry_position():
    with pytest.raises(MtlSyntaxError) as err:
        parse_formula("a <= ", {"a"})
    assert "position" in str(err.value)
    assert err.value.position == 5

    with pytest.raises(MtlSyntaxError, match="unknown channel"):
        parse_formula("bogus <= 1", {"a"})

    with pytest.raises(MtlSyntaxError, match="malformed interval"):
        parse_formula("G[3,1] a <= 1", {"a"})
    with pytest.raises(MtlSyntaxError, match="not a nonnegative integer"):
        parse_formula("G[-1,2] a <= 1", {"a"})
    with pytest.raises(MtlSyntaxError, match="not a nonnegative integer"):
        parse_formula("G[1.5,2] a <= 1", {"a"})
    with pytest.raises(MtlSyntaxError, match="trailing"):
        parse_formula("a <= 1 )", {"a"})


def test_interval_invariants():
    with pytest.raises(MtlError):
        TimeIndexInterval(3, 1)
    with pytest.raises(MtlError):
        TimeIndexInterval(-1, 1)


def test_parse_print_round_trip_random():
    rng = np.random.default_rng(11)
    for _ in range(300):
        phi = random_formula(rng, depth=3)
        text = format_formula(phi)
        assert parse_formula(text, set(CHANNELS)) == phi, text


# ---------------------------------------------------------------------------
# Horizon


def test_horizon_examples():
    phi = parse_formula(
        "G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)", SEIR_CHANNELS
    )
    assert horizon(phi) == 100
    assert horizon(parse_formula("F[0,10] G[0,5] I <= 1", SEIR_CHANNELS)) == 15
    assert horizon(parse_formula("I <= 1", SEIR_CHANNELS)) == 0


def test_horizon_composition_invariants():
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = random_formula(rng, 2)
        g = random_formula(rng, 2)
        assert horizon(And(f, g)) == max(horizon(f), horizon(g))
        interval = TimeIndexInterval(1, 4)
        assert horizon(Always(interval, f)) == 4 + horizon(f)
        assert horizon(Eventually(interval, f)) == 4 + horizon(f)


def test_horizon_until_tight():
    a = Atom("a", "<=", 0.0)
    deep = Always(TimeIndexInterval(0, 5), a)
    # left operand is never read when hi == 0
    assert horizon(Until(TimeIndexInterval(0, 0), deep, a)) == 0
    assert horizon(Until(TimeIndexInterval(0, 3), deep, a)) == 2 + 5
    assert horizon(Until(TimeIndexInterval(0, 3), a, deep)) == 3 + 5


# ---------------------------------------------------------------------------
# Boolean semantics


def test_eval_bool_examples():
    xi = traj(D=[0.0, 0.01, 0.06])
    phi = parse_formula("G[0,2] D <= 0.05", {"D"})
    assert eval_bool(phi, xi, 0) is False
    assert eval_bool(TRUE, xi, 2) is True


def test_eval_bool_too_short():
    xi = traj(D=[0.0, 0.01])
    with pytest.raises(TrajectoryTooShortError):
        eval_bool(parse_formula("G[0,2] D <= 0.05", {"D"}), xi, 0)
    with pytest.raises(TrajectoryTooShortError):
        eval_bool(parse_formula("D <= 0.05", {"D"}), xi, 2)


def test_eval_bool_matches_brute_force_oracle():
    rng = np.random.default_rng(21)
    for _ in range(400):
        phi, xi = random_instance(rng)
        k = int(rng.integers(0, xi.length - horizon(phi)))
        assert eval_bool(phi, xi, k) == oracle_eval(phi, xi.channels, k)


def test_derived_operator_identities():
    rng = np.random.default_rng(22)
    for _ in range(200):
        phi, xi = random_instance(rng, depth=2, max_length=10)
        interval = TimeIndexInterval(0, 2)
        wrapped_e = Eventually(interval, phi)
        wrapped_a = Always(interval, phi)
        if horizon(wrapped_e) > xi.length - 1:
            continue
        assert eval_bool(wrapped_e, xi, 0) == eval_bool(Until(interval, TRUE, phi), xi, 0)
        assert eval_bool(wrapped_a, xi, 0) == eval_bool(
            Not(Eventually(interval, Not(phi))), xi, 0
        )
        assert eval_bool(Not(phi), xi, 0) == (not eval_bool(phi, xi, 0))


# ---------------------------------------------------------------------------
# Robustness


def test_robustness_atom_margin():
    xi = traj(D=[0.01])
    assert eval_robustness(parse_formula("D <= 0.05", {"D"}), xi, 0) == pytest.approx(0.04)
    assert eval_robustness(parse_formula("D >= 0.05", {"D"}), xi, 0) == pytest.approx(-0.04)


def test_robustness_negation_antisymmetry():
    rng = np.random.default_rng(31)
    for _ in range(200):
        phi, xi = random_instance(rng)
        assert eval_robustness(Not(phi), xi, 0) == -eval_robustness(phi, xi, 0)


def test_robustness_sign_soundness():
    rng = np.random.default_rng(32)
    checked = 0
    for _ in range(1200):
        phi, xi = random_instance(rng)
        rho = eval_robustness(phi, xi, 0)
        if abs(rho) <= 1e-9 or not math.isfinite(rho):
            continue
        assert (rho > 0) == eval_bool(phi, xi, 0)
        checked += 1
    assert checked > 800


# ---------------------------------------------------------------------------
# Smooth robustness


def test_smooth_equals_exact_without_min_max_nodes():
    xi = traj(D=[0.01, 0.02])
    phi = parse_formula("!(D >= 0.05)", {"D"})
    for beta in (0.1, 1.0, 100.0):
        assert smooth_robustness(phi, xi, 0, beta) == eval_robustness(phi, xi, 0)


def test_soft_min_exact_on_ties():
    for beta in (0.01, 1.0, 1e6):
        assert _soft_min(np.array([2.5, 2.5]), beta) == pytest.approx(2.5, abs=0.0)
    # through the formula recursion: both conjuncts have margin 0.3
    xi = traj(a=[0.2], b=[0.7])
    phi = parse_formula("a <= 0.5 & b >= 0.4", {"a", "b"})
    for beta in (0.01, 1.0, 1e6):
        assert smooth_robustness(phi, xi, 0, beta) == pytest.approx(0.3, abs=1e-15)


def test_smooth_converges_at_high_beta():
    rng = np.random.default_rng(41)
    for _ in range(150):
        phi, xi = random_instance(rng)
        exact = eval_robustness(phi, xi, 0)
        if not math.isfinite(exact):
            continue
        assert smooth_robustness(phi, xi, 0, 1e6) == pytest.approx(exact, abs=1e-3)


def test_smooth_error_within_documented_bound():
    rng = np.random.default_rng(42)
    for _ in range(150):
        phi, xi = random_instance(rng)
        exact = eval_robustness(phi, xi, 0)
        if not math.isfinite(exact):
            continue
        bound = soft_error_bound(phi, 0)
        for beta in (0.5, 4.0, 64.0):
            err = abs(smooth_robustness(phi, xi, 0, beta) - exact)
            assert err <= bound / beta + 1e-12


def test_smooth_monotone_convergence_single_window():
    # Per-node the soft min/max converge monotonically; single-window
    # formulas are single nodes, so the full value inherits it.
    rng = np.random.default_rng(43)
    for text in ("G[0,6] a <= 0.2", "F[1,5] b >= -0.1"):
        phi = parse_formula(text, set(CHANNELS))
        for _ in range(30):
            xi = Trajectory(
                ts=1.0,
                channels={c: rng.normal(0, 0.5, size=horizon(phi) + 1) for c in CHANNELS},
            )
            exact = eval_robustness(phi, xi, 0)
            prev = None
            beta = 0.25
            for _ in range(16):
                err = abs(smooth_robustness(phi, xi, 0, beta) - exact)
                if prev is not None:
                    assert err <= prev + 1e-9
                prev = err
                beta *= 2.0


def test_soft_min_per_node_monotone():
    rng = np.random.default_rng(44)
    for _ in range(50):
        values = rng.normal(size=int(rng.integers(2, 9)))
        prev = None
        for j in range(18):
            s = _soft_min(values, 2.0 ** (j - 4))
            if prev is not None:
                assert s <= prev + 1e-12
            prev = s
        assert s == pytest.approx(values.min(), abs=1e-6)


def test_smooth_gradient_matches_finite_differences():
    rng = np.random.default_rng(45)
    length = 9
    channels = {c: rng.normal(size=length) for c in CHANNELS}
    phi = parse_formula(
        "(a <= 0.3) U[1,4] (b >= -0.2) | G[0,3] (a >= 0 & b <= 0.5)", set(CHANNELS)
    )
    beta = 11.0
    value, grad = smooth_robustness_grad(phi, channels, 0, beta)
    h = 1e-6
    for name in CHANNELS:
        for idx in range(length):
            up = {c: v.copy() for c, v in channels.items()}
            dn = {c: v.copy() for c, v in channels.items()}
            up[name][idx] += h
            dn[name][idx] -= h
            vu, _ = smooth_robustness_grad(phi, up, 0, beta)
            vd, _ = smooth_robustness_grad(phi, dn, 0, beta)
            fd = (vu - vd) / (2 * h)
            assert grad.get(name, np.zeros(length))[idx] == pytest.approx(fd, abs=1e-6)


def test_smooth_requires_positive_beta():
    xi = traj(a=[0.0])
    with pytest.raises(MtlError):
        smooth_robustness(parse_formula("a <= 1", {"a"}), xi, 0, beta=0.0)


# ---------------------------------------------------------------------------
# Trajectories


def test_trajectory_validation():
    with pytest.raises(MtlError):
        Trajectory(ts=1.0, channels={"a": [1.0, 2.0], "b": [1.0]})
    with pytest.raises(MtlError):
        Trajectory(ts=0.0, channels={"a": [1.0]})
    with pytest.raises(MtlError):
        Trajectory(ts=1.0, channels={})


def test_trajectory_immutable_and_times():
    xi = traj(a=[1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        xi.channels["a"][0] = 5.0
    assert xi.length == 3
    assert np.allclose(xi.times, [0.0, 1.0, 2.0])
    assert xi.channel("a")[1] == 2.0
    with pytest.raises(MtlError):
        xi.channel("missing")
