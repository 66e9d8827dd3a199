import numpy as np
import pytest

from lfi import alfi, dist, sim
from lfi.errors import ConfigError


def small_config(**kw):
    base = dict(t_outer=2, m_inner=2, l_updates=2, encoder_updates=2, n_particles=8, hidden=(8, 8), seed=0)
    base.update(kw)
    return alfi.AlfiConfig(**base)


def make_state(gen=None, x_obs=None, **kw):
    gen = gen or sim.Quadratic()
    x_obs = np.full(gen.q, 0.09) if x_obs is None else x_obs
    return alfi.init_state(small_config(**kw), gen, x_obs)


def constant_encoder(shapes):
    shapes = np.asarray(shapes, float)
    return lambda state, thetas: np.tile(shapes, (len(np.atleast_2d(thetas)), 1))


class CountingGenerator(sim.Generator):
    name = "counting"
    q = 1

    def __init__(self, fail_above=None):
        super().__init__(sim.Box([0.0], [1.0]))
        self.calls = []
        self.fail_above = fail_above

    def simulate(self, theta, seed):
        theta = self.check(theta)
        self.calls.append(seed)
        if self.fail_above is not None and theta[0] > self.fail_above:
            raise sim.SimulationError("planted failure", theta=theta)
        return 2.0 * theta


def test_config_validation():
    box = sim.Box([0.0], [1.0])
    for bad in (dict(t_outer=0), dict(family="gamma"), dict(clip=-1.0),
                dict(proposal_step=[0.0]), dict(disc_activation="sigmoid"),
                dict(encoder_updates=0)):
        with pytest.raises(ConfigError):
            small_config(**bad).validate(box)
    with pytest.raises(ConfigError):
        alfi.AlfiConfig.from_dict({"t_outr": 3})
    cfg = alfi.AlfiConfig.from_dict({"hidden": [4, 4], "family": "gaussian"})
    assert cfg.hidden == (4, 4)
    np.testing.assert_allclose(cfg.step_for(sim.MA2().box), [0.2, 0.1])


def test_observation_length_checked():
    with pytest.raises(ConfigError):
        alfi.init_state(small_config(), sim.MA2(), np.zeros(2))


def test_propose_zero_step_and_reflection():
    box = sim.Box([0.0], [1.0])
    rng = np.random.default_rng(0)
    assert alfi.mh_propose([0.3], [0.0], rng, box)[0] == 0.3
    for _ in range(100):
        out = alfi.mh_propose([0.0], [5.0], rng, box)
        assert box.contains(out)


def test_reflected_proposal_is_symmetric():
    box = sim.Box([0.0], [1.0])
    a, b, half, step, n = 0.05, 0.25, 0.01, 0.3, 100_000

    def hits(start, target, seed):
        rng = np.random.default_rng(seed)
        x = box.reflect(start + step * rng.standard_normal(n))
        return np.count_nonzero(np.abs(x - target) < half)

    fwd, rev = hits(a, b, 1), hits(b, a, 2)
    sd = np.sqrt(fwd + rev)
    assert abs(fwd - rev) < 4 * sd


def test_acceptance_ratio_basics(monkeypatch):
    state = make_state()
    theta = np.array([0.4])
    assert alfi.acceptance_ratio(theta, theta, state) == 1.0
    monkeypatch.setattr(alfi, "encode", constant_encoder([2.0, 3.0]))
    assert alfi.acceptance_ratio([0.1], [0.9], state) == 1.0


def test_acceptance_ratio_closed_form(monkeypatch):
    state = make_state()
    state.d_obs = 0.5

    def enc(state, thetas):
        thetas = np.atleast_2d(thetas)
        return np.where(thetas[:, :1] > 0.5, [2.0, 2.0], [1.0, 1.0])

    monkeypatch.setattr(alfi, "encode", enc)
    assert alfi.acceptance_ratio([0.8], [0.2], state) == pytest.approx(1.0)
    assert alfi.acceptance_ratio([0.2], [0.8], state) == pytest.approx(1 / 1.5)


def test_acceptance_ratio_in_unit_interval():
    state = make_state()
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = alfi.acceptance_ratio(rng.random(1), rng.random(1), state)
        assert 0.0 < r <= 1.0


def test_sweep_with_constant_encoder_accepts_everything(monkeypatch):
    state = make_state()
    monkeypatch.setattr(alfi, "encode", constant_encoder([2.0, 5.0]))
    assert alfi.mh_sweep(state, 5, np.array([0.1])) == 1.0


def test_sweep_is_deterministic():
    a, b = make_state(), make_state()
    alfi.mh_sweep(a, 10, np.array([0.05]))
    alfi.mh_sweep(b, 10, np.array([0.05]))
    np.testing.assert_array_equal(a.particles, b.particles)


def test_jacobian_term_does_not_change_chains():
    a = make_state(family="gaussian")
    b = make_state(family="gaussian")
    alfi.mh_sweep(a, 20, np.array([0.05]), jacobian=False)
    alfi.mh_sweep(b, 20, np.array([0.05]), jacobian=True)
    np.testing.assert_array_equal(a.particles, b.particles)


def test_evaluate_particles_accounting():
    gen = CountingGenerator()
    state = alfi.init_state(small_config(n_particles=1), gen, [0.5])
    alfi.evaluate_particles(state, gen, [17])
    assert gen.calls == [17]
    state = alfi.init_state(small_config(n_particles=100), gen, [0.5])
    seeds = np.arange(100) + 1000
    thetas, summaries, ok = alfi.evaluate_particles(state, gen, seeds)
    assert len(set(gen.calls[1:])) == 100 and ok.all()
    np.testing.assert_array_equal(summaries, 2.0 * thetas)
    assert len(state.replay_theta) == 100


def test_failed_simulation_excluded_but_particle_kept():
    gen = CountingGenerator(fail_above=0.5)
    state = alfi.init_state(small_config(n_particles=20), gen, [0.5])
    before = state.particles.copy()
    thetas, summaries, ok = alfi.evaluate_particles(state, gen, np.arange(20))
    assert not ok.all() and ok.any()
    assert len(thetas) == len(summaries) == ok.sum() == len(state.replay_theta)
    np.testing.assert_array_equal(state.particles, before)


def test_discriminator_loss_zero_for_replicated_observation():
    state = make_state()
    fakes = np.tile(state.x_obs, (10, 1))
    assert alfi.discriminator_loss(state, fakes) == pytest.approx(0.0, abs=1e-15)
    loss = alfi.discriminator_update(state, fakes, 3, 1e-2, 0.1)
    assert loss == pytest.approx(0.0, abs=1e-15)


def test_zero_discriminator_is_pushed_towards_observation():
    state = make_state()
    for p in state.discriminator.parameters():
        p[...] = 0.0
    fakes = np.array([[0.5], [0.6], [0.7]])
    assert alfi.discriminator_loss(state, fakes) == 0.0
    alfi.discriminator_update(state, fakes, 1, 1e-2, None)
    assert alfi.discriminate(state, state.x_obs) > 0.5


def test_discriminator_separates_distant_fakes():
    state = make_state(x_obs=np.array([0.0]), hidden=(64, 64))
    fakes = np.random.default_rng(0).uniform(3.0, 4.0, (100, 1))
    alfi.set_input_scaling(state, np.vstack([fakes, [[0.0]]]))
    alfi.discriminator_update(state, fakes, 500, 1e-2, None)
    gap = alfi.discriminate(state, state.x_obs) - alfi.discriminate(state, fakes).mean()
    assert gap >= 0.5


def test_discriminator_clip_and_d_obs_refresh():
    state = make_state()
    fakes = np.random.default_rng(0).uniform(0.0, 0.3, (50, 1))
    alfi.discriminator_update(state, fakes, 5, 1e-1, 0.05)
    assert max(np.abs(p).max() for p in state.discriminator.parameters()) <= 0.05
    assert state.d_obs == pytest.approx(float(alfi.discriminate(state, state.x_obs)))


def _snapshot(net):
    return [p.copy() for p in net.parameters()]


def test_updates_touch_only_their_own_network():
    state = make_state()
    rng = np.random.default_rng(0)
    thetas = rng.random((30, 1))
    fakes = (thetas - 0.5) ** 2
    enc0 = _snapshot(state.encoder)
    alfi.discriminator_update(state, fakes, 3, 1e-2, 0.1)
    assert all(np.array_equal(a, b) for a, b in zip(enc0, state.encoder.parameters()))
    disc0 = _snapshot(state.discriminator)
    alfi.encoder_update(state, thetas, fakes, 3, 1e-2, rng)
    assert all(np.array_equal(a, b) for a, b in zip(disc0, state.discriminator.parameters()))


def test_encoder_lr_zero_leaves_weights(monkeypatch):
    state = make_state()
    before = _snapshot(state.encoder)
    alfi.encoder_update(state, np.random.default_rng(0).random((10, 1)), np.zeros((10, 1)), 5,
                        0.0, np.random.default_rng(1))
    assert all(np.array_equal(a, b) for a, b in zip(before, state.encoder.parameters()))


def _score_as_first_column(monkeypatch):
    monkeypatch.setattr(alfi, "discriminate", lambda state, x: np.asarray(x, float)[..., 0])


def test_encoder_gaussian_degenerate_targets(monkeypatch):
    state = make_state(family="gaussian")
    _score_as_first_column(monkeypatch)
    y0 = 0.3
    thetas = np.full((64, 1), 0.4)
    ys = np.full((64, 1), y0)
    rng = np.random.default_rng(0)
    losses = [alfi.encoder_update(state, thetas, ys, 1, 1e-3, rng) for _ in range(300)]
    assert np.mean(np.diff(losses) < 0) >= 0.95
    target, _ = dist.h_transform(state.transform, y0)
    mu, sigma = alfi.encode(state, [[0.4]])[0]
    assert mu == pytest.approx(target, abs=0.05)
    assert sigma < 0.1


def test_encoder_recovers_beta_moments(monkeypatch):
    state = make_state(hidden=(16, 16))
    _score_as_first_column(monkeypatch)
    ys = np.random.default_rng(3).beta(2, 5, 2000)[:, None]
    thetas = np.full((2000, 1), 0.3)
    alfi.encoder_update(state, thetas, ys, 2000, 1e-2, np.random.default_rng(0))
    a_hat, b_hat = dist.fit_beta_moments(ys[:, 0]).values
    a, b = alfi.encode(state, [[0.3]])[0]
    assert abs(a - a_hat) <= 0.5 and abs(b - b_hat) <= 0.5


def test_encoder_counts_boundary_hits(monkeypatch):
    state = make_state()
    _score_as_first_column(monkeypatch)
    ys = np.array([[0.0], [0.5], [1.0]])
    alfi.encoder_update(state, np.random.default_rng(0).random((3, 1)), ys, 1, 1e-3,
                        np.random.default_rng(0))
    assert state.boundary_hits == 2


def test_estimate_loglik_examples(monkeypatch):
    state = make_state()
    monkeypatch.setattr(alfi, "encode", constant_encoder([1.0, 1.0]))
    assert alfi.estimate_loglik(state, [0.3]) == pytest.approx(0.0)
    assert alfi.estimate_loglik(state, [0.1]) == alfi.estimate_loglik(state, [0.9])


def test_estimate_loglik_includes_jacobian():
    state = make_state(family="gaussian")
    theta = np.array([[0.35]])
    full = alfi.log_surrogate(state, theta)[0]
    bare = alfi.log_surrogate(state, theta, jacobian=False)[0]
    _, deriv = dist.h_transform(state.transform, state.d_obs)
    assert full - bare == pytest.approx(np.log(abs(deriv)))
    assert alfi.estimate_loglik(state, theta[0]) == pytest.approx(full)


def test_posterior_mode_rules(monkeypatch):
    state = make_state()
    assert alfi.posterior_mode(state, [[0.42]])[0] == 0.42
    cands = np.array([[0.1], [0.5], [0.9]])
    with monkeypatch.context() as m:
        m.setattr(alfi, "encode", constant_encoder([2.0, 2.0]))
        assert alfi.posterior_mode(state, cands)[0] == 0.1
    theta0 = 0.47
    state.d_obs = 0.5

    def peaked(state, thetas):
        t = np.atleast_2d(thetas)[:, 0]
        # Beta(k, k) with k growing near theta0 peaks at y = 0.5.
        k = 1.0 + 50.0 * np.exp(-((t - theta0) / 0.05) ** 2)
        return np.stack([k, k], axis=1)

    monkeypatch.setattr(alfi, "encode", peaked)
    assert alfi.posterior_mode(state, cands)[0] == 0.5


def test_run_budget_accounting():
    gen = CountingGenerator()
    cfg = alfi.AlfiConfig(t_outer=1, n_particles=1, m_inner=1, l_updates=1, encoder_updates=3,
                          hidden=(4,))
    res = alfi.run(cfg, gen, [0.5])
    assert len(gen.calls) == 1 and res.n_simulations == 1
    assert len(res.diagnostics) == 1
    assert res.state.disc_opt.step == 1 and res.state.enc_opt.step == 3
    cfg.encoder_updates = None
    assert alfi.run(cfg, CountingGenerator(), [0.5]).state.enc_opt.step == 1

    gen = CountingGenerator()
    res = alfi.run(small_config(t_outer=3, n_particles=7), gen, [0.5])
    assert len(gen.calls) == res.n_simulations == 21


def test_run_determinism_and_containment():
    gen = sim.Quadratic()
    a = alfi.run(small_config(t_outer=4), gen, [0.09])
    b = alfi.run(small_config(t_outer=4), gen, [0.09])
    np.testing.assert_array_equal(np.array(a.history), np.array(b.history))
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)
    assert all(gen.box.contains(p) for h in a.history for p in h)
    assert [d["loss_d"] for d in a.diagnostics] == [d["loss_d"] for d in b.diagnostics]


def test_run_workers_match_serial():
    gen = sim.MA2()
    x_obs = sim.make_observation(gen, [0.6, 0.2], repeats=10)
    a = alfi.run(small_config(), gen, x_obs)
    b = alfi.run(small_config(workers=4), gen, x_obs)
    np.testing.assert_array_equal(np.array(a.history), np.array(b.history))


def test_run_abort_keeps_partial_result(monkeypatch):
    gen = sim.Quadratic()
    calls = {"n": 0}
    original = alfi.encoder_update

    def failing(*a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            raise FloatingPointError("planted")
        return original(*a, **k)

    monkeypatch.setattr(alfi, "encoder_update", failing)
    with pytest.raises(alfi.RunAborted) as info:
        alfi.run(small_config(t_outer=5), gen, [0.09])
    partial = info.value.partial
    assert len(partial.history) == 1 and partial.samples.shape == (8, 1)


def test_state_round_trip(tmp_path):
    gen = sim.Quadratic()
    res = alfi.run(small_config(), gen, [0.09])
    res.state.save(tmp_path)
    back = alfi.load_state(tmp_path)
    thetas = np.linspace(0.05, 0.95, 7)[:, None]
    np.testing.assert_array_equal(alfi.log_surrogate(back, thetas),
                                  alfi.log_surrogate(res.state, thetas))


@pytest.mark.slow
def test_quadratic_loglik_grid_peaks_at_a_true_mode():
    gen = sim.Quadratic()
    theta_star = 0.2
    x_obs = sim.make_observation(gen, [theta_star], seed=1)
    res = alfi.run(alfi.AlfiConfig(t_outer=60, seed=1), gen, x_obs)
    grid = np.linspace(0, 1, 500)[:, None]
    best = grid[np.argmax(alfi.log_surrogate(res.state, grid)), 0]
    assert min(abs(best - 0.2), abs(best - 0.8)) <= 0.05
