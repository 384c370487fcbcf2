import math

import mpmath
import numpy as np
import pytest
from pytest import approx

import wrdescent as wd
from conftest import make_run


def zero_problem(p=2):
    comp = wd.ComponentOracle(
        value=lambda x: 0.0,
        direction=lambda x: np.zeros(p),
        lipschitz_value=0.0,
        lipschitz_gradient=0.0,
    )
    return wd.FiniteSumProblem.assemble([comp, comp], p, f_star_lower=0.0)


def exploding_problem(scale=1e160):
    comp = wd.ComponentOracle(
        value=lambda x: float(x[0]),
        direction=lambda x, s=scale: s * x,
        lipschitz_value=1.0,
    )
    return wd.FiniteSumProblem.assemble([comp], 1)


class TestRunEpoch:
    def test_zero_directions_fixed_point(self):
        prob = zero_problem()
        x0 = np.array([0.3, -0.4])
        trace = make_run(prob, wd.Constant(0.5, 2), epochs=3, x0=x0)
        for rec in trace.records:
            assert np.array_equal(rec.x_next, x0)
            for r in rec.inner:
                assert np.array_equal(r.z, x0)

    def test_n1_epoch_is_one_gradient_step(self):
        prob = wd.make_problem("logistic", 1, 2, 3)
        x0 = np.array([0.2, -0.1])
        alpha = 0.7
        for policy in (wd.Incremental(), wd.FullGradient()):
            trace = make_run(prob, wd.Constant(alpha, 1), eval_policy=policy, epochs=1, x0=x0)
            expected = x0 - alpha * prob.full_direction(x0)
            assert trace.xs[1] == approx(expected, rel=1e-15)

    def test_two_step_recursion_matches_extended_precision(self):
        # hand-unrolled incremental epoch on the +-1 logistic pair, 50 digits
        prob = wd.logistic_problem([[1.0], [-1.0]], [1.0, 1.0])
        x0 = np.array([0.37])
        alpha_inner = 0.25
        trace = make_run(prob, wd.Constant(0.5, 2), epochs=1, x0=x0)

        mpmath.mp.dps = 50
        sig = lambda t: 1 / (1 + mpmath.e**-t)
        z0 = mpmath.mpf("0.37")
        d1 = -sig(-z0)  # b=1, a=1
        z1 = z0 - mpmath.mpf("0.25") * d1
        d2 = sig(z1)  # b=1, a=-1
        z2 = z1 - mpmath.mpf("0.25") * d2
        assert trace.records[0].inner[0].z[0] == approx(float(z1), rel=1e-15)
        assert trace.xs[1][0] == approx(float(z2), rel=1e-15)

    def test_each_component_queried_once_per_epoch(self):
        prob = wd.make_problem("logistic", 7, 2, 1)
        trace = make_run(
            prob, wd.DecreasingSqrt(7), perm_policy=wd.ShuffledPerEpoch(3), epochs=5
        )
        for rec in trace.records:
            assert sorted(r.index for r in rec.inner) == list(range(7))

    def test_adversarial_order_follows_probe(self):
        prob = wd.make_problem("logistic", 5, 2, 11)
        trace = make_run(
            prob, wd.Constant(0.1, 5), perm_policy=wd.AdversarialMaxNorm(), epochs=2
        )
        for rec in trace.records:
            norms = [
                np.linalg.norm(c.direction(rec.x_start)) for c in prob.components
            ]
            expected = np.argsort(-np.asarray(norms), kind="stable")
            assert [r.index for r in rec.inner] == expected.tolist()


class TestRun:
    def test_bitwise_determinism(self, tmp_path):
        prob = wd.make_problem("logistic", 6, 3, 5)
        traces = []
        for rep in range(2):
            trace = make_run(
                prob,
                wd.Adaptive.recommended(6),
                eval_policy=wd.DelayedAsync(2, 13),
                perm_policy=wd.ShuffledPerEpoch(17),
                epochs=12,
            )
            path = tmp_path / f"t{rep}.txt"
            wd.save_trace(trace, path)
            traces.append(path.read_bytes())
        assert traces[0] == traces[1]

    def test_constant_half_over_l_monotone_after_first_epoch(self, logistic32):
        # regression on the seeded instance, not a theorem
        trace = make_run(
            logistic32,
            wd.Constant(0.5 / logistic32.L, 32),
            epochs=200,
            record_level="epoch_only",
        )
        diffs = np.diff(trace.f_vals[1:])
        assert np.max(diffs) <= 1e-9

    def test_full_gradient_descent_lemma_regime(self, logistic32):
        trace = make_run(
            logistic32,
            wd.Constant(1.0 / logistic32.L, 32),
            eval_policy=wd.FullGradient(),
            epochs=60,
            record_level="epoch_only",
        )
        assert np.max(np.diff(trace.f_vals)) <= 0.0

    def test_step_length_bound_holds_on_runs(self):
        prob = wd.make_problem("sigmoid_nonconvex", 9, 3, 2)
        trace = make_run(prob, wd.Adaptive.recommended(9), eval_policy=wd.ConvexMix(5), epochs=30)
        assert wd.check_step_length_bound_trace(trace).ok

    def test_abort_reports_offending_step(self):
        # one epoch survives (|z| ~ 1e100), the next overflows in ||d||^2
        prob = exploding_problem(scale=1e100)
        cfg = wd.RunConfig(
            problem=prob,
            strategy=wd.Constant(1.0, 1),
            eval_policy=wd.Incremental(),
            perm_policy=wd.Identity(),
            x0=np.array([1.0]),
            epochs=10,
            track_objective=False,
        )
        with np.errstate(over="ignore"):
            trace = wd.run(cfg)
        assert trace.aborted_at == (1, 1)
        assert trace.epochs_completed == 1  # partial trace retained

    def test_box_monitor_flags_exit(self):
        prob = wd.make_problem("logistic", 4, 2, 9)
        cfg = wd.RunConfig(
            problem=prob,
            strategy=wd.Constant(5.0, 4),
            eval_policy=wd.Incremental(),
            perm_policy=wd.Identity(),
            x0=np.zeros(2),
            epochs=40,
            record_level="epoch_only",
            monitor_radius=0.5,
        )
        trace = wd.run(cfg)
        assert trace.bound_exceeded_at is not None
        k = trace.bound_exceeded_at
        assert np.max(np.abs(trace.xs[k])) > 0.5

    def test_adaptive_alpha_recomputable_from_dnorm2(self):
        prob = wd.make_problem("logistic", 5, 2, 21)
        s = wd.Adaptive(delta=4.0, beta=1.5, n=5)
        trace = make_run(prob, s, epochs=15)
        v = s.delta
        for rec in trace.records:
            for r in rec.inner:
                v = v + s.beta * r.dnorm2
                assert r.v == v
                assert r.alpha == v ** (-1.0 / 3.0)

    def test_epoch_only_skips_inner_records(self):
        prob = wd.make_problem("logistic", 4, 2, 7)
        trace = make_run(prob, wd.DecreasingSqrt(4), epochs=6, record_level="epoch_only")
        assert all(rec.inner == [] for rec in trace.records)
        assert len(trace.xs) == 7
        assert len(trace.alpha_sum) == 6


class TestReplay:
    def test_fresh_trace_replays(self):
        prob = wd.make_problem("logistic", 6, 3, 8)
        trace = make_run(
            prob,
            wd.Adaptive.recommended(6),
            eval_policy=wd.ConvexMix(3),
            perm_policy=wd.ShuffledPerEpoch(4),
            epochs=10,
        )
        assert wd.replay(trace).ok

    def test_perturbed_alpha_detected_at_position(self):
        prob = wd.make_problem("logistic", 4, 2, 8)
        trace = make_run(prob, wd.DecreasingSqrt(4), epochs=6)
        trace.records[3].inner[1].alpha *= 1.0 + 1e-12
        rep = wd.replay(trace)
        assert not rep.ok
        assert rep.first_mismatch == (3, 2, "alpha")

    def test_round_trip_through_file(self, tmp_path):
        prob = wd.make_problem("logistic", 5, 2, 31)
        trace = make_run(
            prob,
            wd.Adaptive.recommended(5),
            eval_policy=wd.DelayedAsync(2, 6),
            perm_policy=wd.ShuffledPerEpoch(2),
            epochs=8,
        )
        path = tmp_path / "trace.txt"
        wd.save_trace(trace, path)
        loaded = wd.load_trace(path)
        assert wd.replay(loaded).ok
        wd.save_trace(loaded, tmp_path / "resaved.txt")
        assert path.read_bytes() == (tmp_path / "resaved.txt").read_bytes()

    def test_zhat_reconstructs_bitwise_from_weights(self):
        prob = wd.make_problem("logistic", 6, 3, 12)
        trace = make_run(prob, wd.Constant(0.4, 6), eval_policy=wd.ConvexMix(7), epochs=5)
        for rec in trace.records:
            zs = [rec.x_start] + [r.z for r in rec.inner]
            for i, r in enumerate(rec.inner, start=1):
                assert np.array_equal(wd.hull_point(r.weights, zs[:i]), r.zhat)

    def test_epoch_only_replay_rejected(self):
        prob = wd.make_problem("logistic", 4, 2, 3)
        trace = make_run(prob, wd.Constant(0.2, 4), epochs=3, record_level="epoch_only")
        with pytest.raises(ValueError):
            wd.replay(trace)


class TestSummaryCsv:
    def test_row_count_and_columns(self, tmp_path):
        prob = wd.make_problem("logistic", 2, 1, 2)
        trace = make_run(prob, wd.Constant(0.5, 2), epochs=10, record_level="epoch_only")
        path = tmp_path / "summary.csv"
        wd.write_summary_csv(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "K,F,grad_norm_sq,min_so_far,alpha_first,alpha_last,v"
        assert len(lines) == 11  # header + one row per epoch

    def test_min_so_far_is_running_minimum(self, tmp_path):
        prob = wd.make_problem("logistic", 3, 2, 4)
        trace = make_run(prob, wd.DecreasingSqrt(3), epochs=7, record_level="epoch_only")
        path = tmp_path / "summary.csv"
        wd.write_summary_csv(trace, path)
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        mins = [float(r[3]) for r in rows]
        grads = [float(r[2]) for r in rows]
        expected = np.minimum.accumulate([trace.grad_sq[0]] + grads)[1:]
        assert mins == approx(expected.tolist())


class TestConfigValidation:
    def test_x0_dimension(self):
        prob = wd.make_problem("logistic", 2, 3, 0)
        with pytest.raises(ValueError):
            wd.RunConfig(
                problem=prob,
                strategy=wd.Constant(0.1, 2),
                eval_policy=wd.Incremental(),
                perm_policy=wd.Identity(),
                x0=np.zeros(2),
                epochs=1,
            )

    def test_strategy_n_must_match(self):
        prob = wd.make_problem("logistic", 2, 3, 0)
        with pytest.raises(ValueError):
            wd.RunConfig(
                problem=prob,
                strategy=wd.Constant(0.1, 3),
                eval_policy=wd.Incremental(),
                perm_policy=wd.Identity(),
                x0=np.zeros(3),
                epochs=1,
            )

    def test_epochs_positive(self):
        prob = wd.make_problem("logistic", 2, 3, 0)
        with pytest.raises(ValueError):
            wd.RunConfig(
                problem=prob,
                strategy=wd.Constant(0.1, 2),
                eval_policy=wd.Incremental(),
                perm_policy=wd.Identity(),
                x0=np.zeros(3),
                epochs=0,
            )
