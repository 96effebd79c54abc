import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svmap.dataset import Dataset, stratified_partition
from svmap.kernel import KernelSpec
from svmap.metrics import empirical_risk
from svmap.solver import (
    ModelFormatError,
    SvmModel,
    TrainConfig,
    TrainingError,
    decision_value,
    dual_objective,
    extract_svs,
    full_alphas,
    kkt_violations,
    oracle_solve,
    predict,
    read_model,
    train_svm,
    warm_alphas,
    write_model,
)

from _fixtures import fixture_corpus, random_dataset, two_point, uci

TIGHT = 1e-9


def brute_force_segment(F, C, steps=200_001):
    """Minimize F(a) over a in [0, C] on a fine grid."""
    grid = np.linspace(0.0, C, steps)
    vals = np.array([F(a) for a in grid])
    return grid[int(np.argmin(vals))]


# --------------------------------------------------------------- hand cases


def test_two_point_hand_solution():
    # Q = [[0, 0], [0, 4]] on the segment a1 = a2 = a gives F(a) = 2a^2 - 2a.
    a_star = brute_force_segment(lambda a: 2 * a * a - 2 * a, 10.0)
    assert a_star == pytest.approx(0.5, abs=1e-4)

    m = train_svm(two_point(), TrainConfig(C=10.0))
    np.testing.assert_allclose(m.alphas, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(m.weights, [1.0, 0.0], atol=1e-12)
    assert m.bias == pytest.approx(-1.0, abs=1e-12)
    assert m.objective == pytest.approx(-0.5, abs=1e-12)
    assert abs(decision_value(m, [1.0, 0.0])) <= 1e-9


def test_two_point_oracle():
    m = oracle_solve(two_point(), TrainConfig(C=10.0))
    np.testing.assert_allclose(m.alphas, [0.5, 0.5], atol=1e-8)
    assert m.bias == pytest.approx(-1.0, abs=1e-8)


def test_two_point_risk_zero():
    m = train_svm(two_point(), TrainConfig(C=10.0))
    assert empirical_risk(m, two_point()) == pytest.approx(0.0, abs=1e-12)


def test_two_point_extract_both():
    m = train_svm(two_point(), TrainConfig(C=10.0))
    svs = extract_svs(m)
    assert sorted(svs.ids) == [0, 1]
    assert list(svs.labels) == [-1, 1]


def test_duplicated_point_opposite_labels():
    d = Dataset([[1.0, 2.0], [1.0, 2.0]], [1, -1])
    # Q has all entries +-K so F(a, a) = -2a: the optimum sits on the box.
    a_star = brute_force_segment(lambda a: -2 * a, 1.0)
    assert a_star == 1.0
    for solve in (train_svm, oracle_solve):
        m = solve(d, TrainConfig(C=1.0))
        np.testing.assert_allclose(m.alphas, [1.0, 1.0], atol=1e-8)


def test_separable_large_c_zero_hinge():
    rng = np.random.default_rng(0)
    pos = rng.uniform(1, 3, (15, 2))
    neg = rng.uniform(-3, -1, (15, 2))
    d = Dataset(np.vstack([pos, neg]), [1] * 15 + [-1] * 15)
    m = train_svm(d, TrainConfig(C=1e4, kkt_tol=1e-8))
    assert empirical_risk(m, d) <= 1e-7


def test_random_twenty_point_oracle():
    d = random_dataset(np.random.default_rng(20), 20, 2)
    cfg = TrainConfig(C=1.0, kkt_tol=TIGHT)
    assert abs(train_svm(d, cfg).objective - oracle_solve(d, cfg).objective) <= 1e-6


def test_free_sv_margin():
    d = random_dataset(np.random.default_rng(4), 30, 3)
    cfg = TrainConfig(C=1.0)
    m = train_svm(d, cfg)
    free = (m.alphas > 0) & (m.alphas < cfg.C)
    assert free.any()
    for k in np.flatnonzero(free):
        y = m.support.labels[k]
        assert abs(y * decision_value(m, m.support.X[k]) - 1) <= cfg.kkt_tol * 10


def bias_only(bias, dim=2):
    empty = Dataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))
    return SvmModel(empty, np.zeros(0), bias, KernelSpec(), 0.0, dim, True, 0)


def test_empty_support_returns_bias():
    assert decision_value(bias_only(0.37), [5.0, -1.0]) == 0.37


@pytest.mark.parametrize("b, label", [(0.7, 1), (-0.2, -1), (0.0, 1)])
def test_predict_sign(b, label):
    assert predict(bias_only(b), [0.0, 0.0]) == label


def test_dimension_mismatch():
    m = train_svm(two_point(), TrainConfig())
    with pytest.raises(ValueError):
        decision_value(m, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        predict(m, [1.0])


def test_extract_svs_asserts_on_empty():
    with pytest.raises(AssertionError):
        extract_svs(bias_only(0.0))


def test_pendigits_partition_sv_count():
    d = uci("pendigits")
    part = stratified_partition(d, 10, 7).partitions[0]
    m = train_svm(part, TrainConfig())
    assert 0 < m.n_sv < part.n


def test_training_errors():
    with pytest.raises(TrainingError):
        train_svm(Dataset([[1.0]], [1]), TrainConfig())
    with pytest.raises(TrainingError):
        train_svm(Dataset([[1.0], [2.0]], [1, 1]), TrainConfig())


def test_config_validation():
    for bad in (dict(C=0), dict(kkt_tol=0), dict(sv_epsilon=-1), dict(max_solver_passes=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_budget_exhaustion_flags_unconverged(caplog):
    d = random_dataset(np.random.default_rng(8), 30, 3)
    cfg = TrainConfig(C=10.0, kkt_tol=1e-12, max_solver_passes=1)
    m = train_svm(d, cfg)
    assert not m.converged
    assert m.iterations == cfg.update_budget(d.n) == 900
    assert "without reaching" in caplog.text
    # the best-so-far iterate is still dual feasible
    a = full_alphas(m, d)
    assert np.all((a >= 0) & (a <= cfg.C))


def test_oracle_size_limit():
    d = random_dataset(np.random.default_rng(0), 51, 2)
    with pytest.raises(ValueError):
        oracle_solve(d, TrainConfig())


# ---------------------------------------------------------- invariants


@pytest.mark.parametrize("case", range(24))
def test_feasibility_and_kkt(case):
    d, cfg = fixture_corpus(24, seed=99)[case]
    m = train_svm(d, cfg)
    a = full_alphas(m, d)
    assert np.all(a >= 0) and np.all(a <= cfg.C)
    assert np.all(m.alphas > 0) and np.all(m.alphas <= cfg.C + cfg.kkt_tol)
    assert abs(np.dot(a, d.labels)) <= d.n * cfg.kkt_tol
    assert kkt_violations(m, d, a, cfg.C, cfg.kkt_tol).size == 0
    assert m.objective == pytest.approx(dual_objective(a, d, cfg.kernel), abs=1e-9)


@pytest.mark.parametrize("case", range(12))
def test_oracle_equivalence(case):
    d, cfg = fixture_corpus(12, seed=5)[case]
    tight = TrainConfig(C=cfg.C, kernel=cfg.kernel, kkt_tol=TIGHT)
    assert abs(train_svm(d, tight).objective - oracle_solve(d, tight).objective) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(6, 24), st.sampled_from([0.1, 1.0, 10.0]),
       st.sampled_from(["linear", "rbf"]))
def test_sample_monotonicity(seed, n, C, kind):
    rng = np.random.default_rng(seed)
    full = random_dataset(rng, n + 6, 3)
    small = full.subset(np.arange(n))
    if len(set(small.labels)) < 2:
        return
    cfg = TrainConfig(C=C, kernel=KernelSpec(kind, 0.5), kkt_tol=TIGHT)
    # Dual minimum = -(primal optimum): more samples can only lower it.
    assert oracle_solve(full, cfg).objective <= oracle_solve(small, cfg).objective + 1e-7
    assert train_svm(full, cfg).objective <= train_svm(small, cfg).objective + 1e-7


def test_determinism():
    d = random_dataset(np.random.default_rng(31), 200, 5)
    cfg = TrainConfig(C=1.0, kernel=KernelSpec("rbf", 0.2))
    assert train_svm(d, cfg).same_as(train_svm(d, cfg))


def test_warm_start_from_subset_reaches_same_optimum():
    d = random_dataset(np.random.default_rng(2), 40, 3)
    cfg = TrainConfig(C=1.0, kkt_tol=TIGHT)
    first = train_svm(d.subset(np.arange(25)), cfg)
    warm = train_svm(d, cfg, warm_alphas(d, first))
    assert warm.objective == pytest.approx(train_svm(d, cfg).objective, abs=1e-8)


# -------------------------------------------------------- serialization


@pytest.mark.parametrize("case", range(12))
def test_model_round_trip(tmp_path, case):
    d, cfg = fixture_corpus(12, seed=17)[case]
    m = train_svm(d, cfg)
    write_model(m, tmp_path / "m.txt")
    back = read_model(tmp_path / "m.txt")
    assert back.same_as(m)
    assert back.converged == m.converged and back.iterations == m.iterations
    np.testing.assert_array_equal(back.support.labels, m.support.labels)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda t: "",
        lambda t: t.replace("svmap_model 1", "libsvm"),
        lambda t: t.replace("nr_sv", "nr_svx"),
        lambda t: t.replace("bias ", "bias x"),
        lambda t: t.rsplit("\n", 2)[0] + "\n",
        lambda t: t.replace("# id=", "# "),
        lambda t: t.replace("\nSV\n", "\n"),
        lambda t: t.replace("1:", "99:"),
    ],
)
def test_corrupted_model(tmp_path, mutate):
    m = train_svm(random_dataset(np.random.default_rng(3), 10, 2), TrainConfig())
    p = tmp_path / "m.txt"
    write_model(m, p)
    p.write_text(mutate(p.read_text()))
    with pytest.raises(ModelFormatError):
        read_model(p)


def test_binary_garbage_model(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(ModelFormatError):
        read_model(p)
