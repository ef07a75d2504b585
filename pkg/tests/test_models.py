import json
from fractions import Fraction

import numpy as np
import pytest

from ringflow.errors import ConfigError, DimensionError, DomainError, ModelSpecError
from ringflow.models import (
    ControlModel,
    ControlSet,
    GameControlSet,
    GameModel,
    MinPlusModel,
    a6_game,
    apply_control_operator,
    apply_game_operator,
    closed_form_speed_control,
    closed_form_speed_game,
    load_model,
    model_from_spec,
    safety_midpoint_rule,
    three_phase_controls,
    uniform_eigenvector,
    validate_control_set,
    verify_eigenpair,
)
from ringflow.ring import RingConfig


def _dyadic(rng, size, low, high, denominator=8):
    return rng.integers(low * denominator, high * denominator + 1, size=size) / denominator


def _random_control_set(rng, max_controls=6):
    k = int(rng.integers(1, max_controls + 1))
    alphas = rng.uniform(-2.0, 2.0, size=k)
    betas = rng.uniform(0.0, 1.0, size=k)
    betas[0] = max(betas[0], 0.05)
    return ControlSet.of(zip(alphas, betas))


def _random_game(rng, max_side=4):
    rows = []
    for u in range(int(rng.integers(1, max_side + 1))):
        k = int(rng.integers(1, max_side + 1))
        options = list(zip(rng.uniform(-2.0, 2.0, size=k), rng.uniform(0.0, 1.0, size=k)))
        rows.append((f"u{u}", options))
    rows[0][1][0] = (rows[0][1][0][0], max(rows[0][1][0][1], 0.05))
    return GameControlSet.of(rows)


def _random_ring(rng, max_cars=12):
    n = int(rng.integers(1, max_cars + 1))
    return RingConfig(n, int(rng.integers(n, 4 * n + 1)))


def test_ring_config_rejects_too_many_cars():
    with pytest.raises(ConfigError):
        RingConfig(6, 5)
    with pytest.raises(ConfigError):
        RingConfig(0, 5)


def test_ring_from_ratio_keeps_n_and_m():
    ring = RingConfig.from_density("2/5")
    assert (ring.n, ring.m) == (2, 5)
    assert ring.density == Fraction(2, 5)


def test_ring_from_decimal_uses_bounded_denominator(caplog):
    ring = RingConfig.from_density("0.3333", max_denominator=10)
    assert (ring.n, ring.m) == (1, 3)
    assert "1/3" in caplog.text


def test_ring_from_density_scale():
    ring = RingConfig.from_density(Fraction(1, 4), scale=3)
    assert (ring.n, ring.m) == (3, 12)


def test_ring_from_density_out_of_range():
    with pytest.raises(ConfigError):
        RingConfig.from_density(0.0)
    with pytest.raises(ConfigError):
        RingConfig.from_density("1.5")


def test_validate_control_set_reports_beta_range():
    report = validate_control_set(ControlSet.of([(1, 1.5)]))
    assert not report.ok
    assert report.violations[0].code == "beta_range"
    assert "β out of [0,1]" in report.violations[0].message


def test_validate_control_set_reports_missing_coupling():
    report = validate_control_set(ControlSet.of([(1, 0), (0.5, 0)]))
    assert [v.code for v in report.violations] == ["no_coupling"]


def test_validate_control_set_empty():
    assert validate_control_set(ControlSet(())).violations[0].code == "empty"
    assert validate_control_set(GameControlSet(())).violations[0].code == "empty"


def test_validate_game_locates_bad_option():
    game = GameControlSet.of([("a", [(0, 0.5)]), ("b", [(1, 0), (0, -0.1)])])
    report = validate_control_set(game)
    assert [(v.code, v.location) for v in report.violations] == [("beta_range", "rows[1].options[1]")]


def test_three_phase_operator_example():
    ring = RingConfig(1, 4)
    result = apply_control_operator([0.0], three_phase_controls(), ring)
    assert result.tolist() == [min(1.0, 1.0 / 3.0 + 0.5, 3.0)]


def test_control_operator_wraps_last_car():
    U = ControlSet.of([(0.0, 0.5)])
    ring = RingConfig(2, 6)
    assert apply_control_operator([0.0, 2.0], U, ring).tolist() == [1.0, 4.0]


def test_operator_dimension_mismatch():
    with pytest.raises(DimensionError):
        apply_control_operator([0.0, 1.0], three_phase_controls(), RingConfig(3, 6))


def test_game_operator_single_row_matches_max_of_options():
    game = GameControlSet.of([("only", [(0.0, 0.5), (1.0, 0.0)])])
    ring = RingConfig(2, 4)
    assert apply_game_operator([0.0, 1.0], game, ring).tolist() == [1.0, 2.5]


def test_control_set_embeds_as_game():
    rng = np.random.default_rng(11)
    U = three_phase_controls()
    ring = RingConfig(5, 13)
    x = rng.uniform(0.0, 13.0, size=5)
    np.testing.assert_array_equal(apply_control_operator(x, U, ring), apply_game_operator(x, U.as_game(), ring))


def test_minplus_model_matches_its_control_embedding():
    rng = np.random.default_rng(3)
    model = MinPlusModel(2.0, 1.0)
    ring = RingConfig(4, 11)
    embedded = ControlModel(model.as_control_set())
    for _ in range(50):
        x = np.sort(rng.uniform(0.0, 11.0, size=4))
        np.testing.assert_allclose(model.apply(x, ring), embedded.apply(x, ring), atol=1e-12)


def test_operator_homogeneity_and_monotonicity_exact():
    rng = np.random.default_rng(8)
    ring = RingConfig(6, 16)
    models = [
        MinPlusModel(2.0, 1.0),
        ControlModel(ControlSet.of([(1.0, 0.0), (0.375, 0.125), (-1.0, 1.0)])),
        GameModel(GameControlSet.of([("a", [(0.5, 0.25), (-0.25, 0.75)]), ("b", [(1.0, 0.0)])])),
    ]
    for model in models:
        for _ in range(1000 // len(models) + 1):
            x = _dyadic(rng, 6, -20, 20)
            c = float(_dyadic(rng, 1, -10, 10)[0])
            np.testing.assert_array_equal(model.apply(x + c, ring), model.apply(x, ring) + c)
            bump = _dyadic(rng, 6, 0, 4)
            assert np.all(model.apply(x + bump, ring) >= model.apply(x, ring))


def test_control_operator_midpoint_concavity_exact():
    rng = np.random.default_rng(9)
    ring = RingConfig(5, 12)
    U = ControlSet.of([(1.0, 0.0), (0.375, 0.125), (-1.0, 1.0), (0.0, 0.5)])
    for _ in range(1000):
        x = _dyadic(rng, 5, -20, 20)
        y = _dyadic(rng, 5, -20, 20)
        mid = apply_control_operator((x + y) / 2, U, ring)
        avg = (apply_control_operator(x, U, ring) + apply_control_operator(y, U, ring)) / 2
        assert np.all(mid >= avg)


def test_closed_form_three_phase_examples():
    U = three_phase_controls()
    assert closed_form_speed_control(U, 0.25).mu == pytest.approx(5.0 / 6.0)
    assert closed_form_speed_control(U, 0.25).argmin == 1
    assert closed_form_speed_control(U, 0.1).mu == pytest.approx(1.0)
    assert closed_form_speed_control(U, 0.9).argmin == 2


def test_closed_form_rejects_empty_road():
    with pytest.raises(DomainError):
        closed_form_speed_control(three_phase_controls(), 0.0)
    with pytest.raises(DomainError):
        closed_form_speed_game(a6_game(), 0.0)


def test_closed_form_game_example():
    game = GameControlSet.of([("follow", [(0, 0.5), (1, 0)])])
    speed = closed_form_speed_game(game, 0.5)
    assert speed.mu == 1.0
    assert speed.argmin == 0


def test_a6_game_speed_in_jam_phase():
    speed = closed_form_speed_game(a6_game(), 0.9)
    assert speed.argmin == 3
    assert speed.mu == pytest.approx(max(-0.25 + 0.2 / 0.9, -0.2 + 0.17 / 0.9, 0.0))


def test_uniform_eigenvector_spacing():
    assert uniform_eigenvector(RingConfig(4, 10)).tolist() == [0.0, 2.5, 5.0, 7.5]


def test_control_eigenpair_random_sets():
    rng = np.random.default_rng(1)
    for _ in range(200):
        U = _random_control_set(rng)
        ring = _random_ring(rng)
        mu = closed_form_speed_control(U, ring.density).mu
        assert verify_eigenpair(mu, uniform_eigenvector(ring), U, ring)


def test_game_eigenpair_random_grids():
    rng = np.random.default_rng(2)
    for _ in range(200):
        game = _random_game(rng)
        ring = _random_ring(rng)
        mu = closed_form_speed_game(game, ring.density).mu
        assert verify_eigenpair(mu, uniform_eigenvector(ring), GameModel(game), ring)


def test_eigenpair_rejects_wrong_speed():
    ring = RingConfig(3, 7)
    U = three_phase_controls()
    mu = closed_form_speed_control(U, ring.density).mu
    assert not verify_eigenpair(mu + 1e-6, uniform_eigenvector(ring), U, ring)


def test_safety_midpoint_rule():
    assert safety_midpoint_rule(0.0, 4.0, 1.0) == 3.0
    assert safety_midpoint_rule(0.0, 1.0, 1.0) == 0.5


def test_model_spec_roundtrip():
    for model in (MinPlusModel(2.0, 1.0), ControlModel(three_phase_controls()), GameModel(a6_game())):
        assert model_from_spec(json.loads(json.dumps(model.to_spec()))) == model


def test_model_spec_errors():
    with pytest.raises(ModelSpecError) as info:
        model_from_spec({"type": "control", "controls": [{"alpha": 1, "beta": 2}]})
    assert info.value.details()["violations"][0]["code"] == "beta_range"
    with pytest.raises(ModelSpecError):
        model_from_spec({"type": "unknown"})
    with pytest.raises(ModelSpecError):
        model_from_spec({"type": "minplus", "v": 2})


def test_minplus_warns_on_short_safety_distance(caplog):
    MinPlusModel(2.0, 0.5).validate()
    assert "shorter than one car length" in caplog.text


def test_load_model_reports_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_model(path)
