import numpy as np
import pytest

from dnnopt.actor import (
    ActorConfig,
    RestrictedBounds,
    actor_loss,
    actor_loss_gradients,
    actor_moves,
    boundary_violation,
    init_actor,
    propose_candidates,
    restricted_bounds,
    train_actor,
)
from dnnopt.critic import constant_critic, generate_pseudo_samples, train_critic
from dnnopt.nn import MLP, TrainConfig, get_flat_params, set_flat_params
from dnnopt.problem import OBJECTIVE_MIN, SpecDefinition


def specs_for(m, w0=1.0):
    out = [SpecDefinition("obj", OBJECTIVE_MIN, weight=w0)]
    out += [SpecDefinition(f"c{i}", "constraint-le", 0.0) for i in range(m)]
    return tuple(out)


def cfg_with(lam=1e4, noise=0.0, **train_kw):
    base = dict(epochs=80, batch_size=64, learning_rate=1e-2, seed=0, patience=0)
    base.update(train_kw)
    return ActorConfig(lam=lam, noise_sigma_frac=noise, train=TrainConfig(**base))


class TestRestrictedBounds:
    def test_single_elite_collapses_box(self):
        x = np.array([[0.3, 0.8]])
        rb = restricted_bounds(x)
        assert np.array_equal(rb.lb, x[0])
        assert np.array_equal(rb.ub, x[0])

    def test_componentwise_extrema(self):
        rb = restricted_bounds(np.array([[0.2, 0.9], [0.4, 0.1]]))
        assert np.array_equal(rb.lb, [0.2, 0.1])
        assert np.array_equal(rb.ub, [0.4, 0.9])

    def test_contains_every_elite(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            elites = rng.random((rng.integers(1, 12), 4))
            rb = restricted_bounds(elites)
            assert np.all(elites >= rb.lb) and np.all(elites <= rb.ub)

    def test_subset_shrinks_or_preserves(self):
        rng = np.random.default_rng(1)
        elites = rng.random((10, 3))
        rb_full = restricted_bounds(elites)
        rb_sub = restricted_bounds(elites[:4])
        assert np.all(rb_sub.lb >= rb_full.lb)
        assert np.all(rb_sub.ub <= rb_full.ub)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            restricted_bounds(np.empty((0, 3)))

    def test_inverted_bounds_rejected(self):
        with pytest.raises(ValueError):
            RestrictedBounds(lb=np.array([0.5]), ub=np.array([0.2]))


class TestBoundaryViolation:
    def setup_method(self):
        self.rb = RestrictedBounds(lb=np.array([0.2]), ub=np.array([0.4]))

    def test_inside_box_is_zero(self):
        assert boundary_violation(np.array([0.3]), np.array([0.05]), self.rb) == 0.0

    def test_below_lower(self):
        v = boundary_violation(np.array([0.1]), np.array([0.0]), self.rb)
        assert v == pytest.approx(0.1)

    def test_above_upper(self):
        v = boundary_violation(np.array([0.5]), np.array([0.05]), self.rb)
        assert v == pytest.approx(0.15)

    def test_nonnegative_and_zero_exactly_on_box(self):
        rng = np.random.default_rng(2)
        rb = RestrictedBounds(lb=np.array([0.2, 0.3]), ub=np.array([0.6, 0.7]))
        for _ in range(300):
            y = rng.uniform(-0.5, 1.5, size=2)
            v = boundary_violation(y, np.zeros(2), rb)
            assert np.all(v >= 0)
            inside = np.all((y >= rb.lb) & (y <= rb.ub))
            assert (np.all(v == 0)) == inside

    def test_continuity_across_face(self):
        rb = RestrictedBounds(lb=np.array([0.2]), ub=np.array([0.8]))
        eps = 1e-9
        below = boundary_violation(np.array([0.2 - eps]), np.zeros(1), rb)
        at = boundary_violation(np.array([0.2]), np.zeros(1), rb)
        assert abs(below[0] - at[0]) <= eps + 1e-15


class TestActorLossGradient:
    def test_matches_finite_differences(self):
        # tiny nets, d <= 3, <= 8 hidden units
        rng = np.random.default_rng(3)
        for trial in range(12):
            d = int(rng.integers(1, 4))
            m = int(rng.integers(0, 3))
            specs = specs_for(m, w0=0.7)
            X = rng.random((5, d))
            F = rng.normal(size=(5, m + 1))
            ps = generate_pseudo_samples(X, F)
            critic = train_critic(
                ps, TrainConfig(epochs=10, seed=trial), hidden_sizes=(8,), init_seed=trial
            )
            actor = init_actor(d, (8,), seed=trial)
            rb = RestrictedBounds(lb=np.full(d, 0.45), ub=np.full(d, 0.55))
            cfg = cfg_with(lam=1e3)
            batch = rng.random((4, d))

            loss0, grads = actor_loss_gradients(actor, critic, batch, rb, specs, cfg)
            flat = np.concatenate([np.concatenate([gW.ravel(), gb.ravel()]) for gW, gb in grads])

            theta = get_flat_params(actor)
            fd = np.zeros_like(theta)
            h = 1e-6
            for k in range(theta.size):
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h
                tm[k] -= h
                set_flat_params(actor, tp)
                lp = actor_loss(actor, critic, batch, rb, specs, cfg)
                set_flat_params(actor, tm)
                lm = actor_loss(actor, critic, batch, rb, specs, cfg)
                fd[k] = (lp - lm) / (2 * h)
            set_flat_params(actor, theta)
            denom = max(np.linalg.norm(flat), np.linalg.norm(fd), 1e-10)
            assert np.linalg.norm(flat - fd) / denom < 1e-3


class TestTrainActor:
    def test_penalty_only_objective_drives_into_box(self):
        # frozen constant critic: the loss reduces to the boundary penalty
        rng = np.random.default_rng(4)
        d = 3
        critic = constant_critic(d, np.array([1.0, -0.5]))
        specs = specs_for(1)
        elites = rng.random((8, d))
        rb = restricted_bounds(elites)
        actor = init_actor(d, (16, 16), seed=4)
        # start from a deliberately bad policy whose moves leave the box
        for i in range(len(actor.weights)):
            actor.weights[i] = actor.weights[i] * 3.0
        cfg = cfg_with(lam=1e4, epochs=300, lr_decay=0.995)
        actor, history = train_actor(actor, critic, elites, rb, specs, cfg)
        moved = elites + actor_moves(actor, elites, rb, cfg)
        viol = np.maximum(0, rb.lb - moved) + np.maximum(0, moved - rb.ub)
        assert viol.mean() < 1e-3
        assert history[-1] <= history[0]

    def test_large_penalty_random_critic_confines_proposals(self):
        d = 4
        specs = specs_for(2)
        hits = 0
        total = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            X = rng.random((10, d))
            F = rng.normal(size=(10, 3))
            critic = train_critic(
                generate_pseudo_samples(X, F),
                TrainConfig(epochs=15, seed=seed),
                hidden_sizes=(16,),
                init_seed=seed,
            )
            elites = rng.random((10, d)) * 0.3 + 0.35
            rb = restricted_bounds(elites)
            actor = init_actor(d, (16, 16), seed=seed)
            cfg = ActorConfig(lam=1e6, noise_sigma_frac=0.0, train=TrainConfig(epochs=150, learning_rate=1e-2, seed=seed, patience=0))
            actor, _ = train_actor(actor, critic, elites, rb, specs, cfg)
            moved = elites + actor_moves(actor, elites, rb, cfg)
            inside = np.all((moved >= rb.lb - 1e-2) & (moved <= rb.ub + 1e-2), axis=1)
            hits += inside.sum()
            total += inside.size
        assert hits / total >= 0.95

    def test_moves_elites_toward_known_optimum(self):
        # critic memorizing a bowl centered inside the elite box
        rng = np.random.default_rng(5)
        d = 2
        x_star = np.array([0.5, 0.5])
        X = rng.random((25, d)) * 0.6 + 0.2
        ps = generate_pseudo_samples(X, np.sum((X - x_star) ** 2, axis=1)[:, None])
        # train on endpoint geometry: f(x + dx) = ||x + dx - x*||^2
        critic = train_critic(ps, TrainConfig(epochs=300, learning_rate=3e-3, seed=5, patience=0), hidden_sizes=(32, 32), init_seed=5)
        specs = specs_for(0)
        elites = X[:10]
        rb = restricted_bounds(X)
        actor = init_actor(d, (16, 16), seed=5)
        cfg = cfg_with(lam=1e4, epochs=200)
        actor, _ = train_actor(actor, critic, elites, rb, specs, cfg)
        moved = elites + actor_moves(actor, elites, rb, cfg)
        before = np.linalg.norm(elites - x_star, axis=1).mean()
        after = np.linalg.norm(moved - x_star, axis=1).mean()
        assert after < before

    def test_empty_elites_rejected(self):
        critic = constant_critic(2, np.array([0.0]))
        with pytest.raises(ValueError):
            train_actor(init_actor(2), critic, np.empty((0, 2)), RestrictedBounds(np.zeros(2), np.ones(2)), specs_for(0), cfg_with())


class TestProposeCandidates:
    def test_zero_actor_zero_noise_returns_elites(self):
        d = 3
        actor = MLP([d, 4, d], output_activation="tanh")  # all-zero weights
        rng = np.random.default_rng(6)
        elites = rng.random((5, d))
        rb = restricted_bounds(elites)
        cand = propose_candidates(actor, elites, rb, cfg_with(noise=0.0), seed=1)
        assert np.array_equal(cand, elites)

    def test_one_candidate_per_elite(self):
        d = 2
        actor = init_actor(d, seed=7)
        rng = np.random.default_rng(7)
        for n in (1, 4, 9):
            elites = rng.random((n, d))
            cand = propose_candidates(actor, elites, restricted_bounds(elites), cfg_with(noise=0.1), seed=2)
            assert cand.shape == (n, d)

    def test_candidates_clipped_to_unit_cube(self):
        d = 2
        actor = init_actor(d, seed=8)
        elites = np.array([[0.01, 0.99], [0.98, 0.02], [0.5, 0.5]])
        cand = propose_candidates(actor, elites, restricted_bounds(elites), cfg_with(noise=3.0), seed=3)
        assert np.all(cand >= 0.0) and np.all(cand <= 1.0)

    def test_reproducible_given_seed(self):
        d = 3
        actor = init_actor(d, seed=9)
        elites = np.random.default_rng(9).random((6, d))
        rb = restricted_bounds(elites)
        a = propose_candidates(actor, elites, rb, cfg_with(noise=0.2), seed=11)
        b = propose_candidates(actor, elites, rb, cfg_with(noise=0.2), seed=11)
        assert np.array_equal(a, b)

    def test_move_magnitude_bounded_by_scale(self):
        d = 2
        actor = init_actor(d, seed=10)
        elites = np.random.default_rng(10).random((8, d))
        rb = restricted_bounds(elites)
        cfg = cfg_with(noise=0.0)
        moves = actor_moves(actor, elites, rb, cfg)
        assert np.all(np.abs(moves) <= cfg.delta_scale * rb.width + 1e-12)


class TestActorConfig:
    def test_small_penalty_rejected(self):
        with pytest.raises(ValueError):
            ActorConfig(lam=10.0)

    def test_negative_noise_rejected(self):
        with pytest.raises(ValueError):
            ActorConfig(noise_sigma_frac=-0.1)
