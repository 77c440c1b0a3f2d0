import pytest

from rsdp.catalog import MODELS
from rsdp.config import ConfigError, dump_model, load_model, model_to_dict, parse_experiment
from rsdp.model import QMatrixError


@pytest.mark.parametrize("name", sorted(MODELS))
def test_model_round_trip(name):
    m = MODELS[name]()
    text = dump_model(m)
    again = load_model(text)
    assert model_to_dict(again) == model_to_dict(m)
    assert dump_model(again) == text


def test_inline_model_and_defaults():
    cfg = parse_experiment("model:\n  rates: {family: constant, Q: [[0, 1], [2, 0]]}\n"
                           "  drift: {A: [[[-1]], [[-1]]]}\n  sigma: {S: [[1]]}\n")
    assert cfg.model.N == 2 and cfg.seed == 0 and cfg.workers == 1


def test_error_carries_line_and_column():
    text = ("model:\n  rates: {family: constant, Q: [[0, 1], [2, 0]]}\n"
            "  drift: {A: [[[-1]], [[-1]]]}\n  sigma: {S: [[1]]}\nseed: -4\n")
    with pytest.raises(ConfigError) as e:
        parse_experiment(text, "exp.yaml")
    assert (e.value.line, e.value.column) == (5, 7)
    assert str(e.value).startswith("exp.yaml:5:7:")


def test_unknown_family_and_section():
    with pytest.raises(ConfigError, match="unknown rate family"):
        parse_experiment("model:\n  rates: {family: spline}\n  drift: {A: [[[-1]]]}\n  sigma: {S: [[1]]}\n")
    with pytest.raises(ConfigError) as e:
        parse_experiment("model:\n  rates: {family: constant, Q: [[0]]}\n  drift: {A: [[[-1]]]}\n"
                         "  sigma: {S: [[1]]}\nplot: {}\n")
    assert e.value.line == 5


def test_yaml_syntax_error_located():
    with pytest.raises(ConfigError) as e:
        parse_experiment("model: [1, 2\nseed: 3\n")
    assert e.value.line is not None


def test_negative_rate_is_q_matrix_error():
    with pytest.raises(QMatrixError):
        parse_experiment("model:\n  rates: {family: tanh, a: [[0, -1], [1, 0]], b: [[0, 0], [0, 0]],"
                         " v: [[[0], [1]], [[1], [0]]]}\n  drift: {A: [[[-1]], [[-1]]]}\n  sigma: {S: [[1]]}\n")


def test_hash_covers_model_file(tmp_path):
    (tmp_path / "m.yaml").write_text(dump_model(MODELS["product-chain"]()))
    (tmp_path / "e.yaml").write_text("model: m.yaml\nseed: 1\n")
    from rsdp.config import load_experiment
    h1 = load_experiment(str(tmp_path / "e.yaml")).hash()
    (tmp_path / "m.yaml").write_text(dump_model(MODELS["strong-order"]()))
    assert load_experiment(str(tmp_path / "e.yaml")).hash() != h1
