# tests/unit/test_utils.py
import math
from enum import Enum

import numpy as np
import pytest

from services.output_paths import ensure_parent_dir, next_free_path, resolve_output_path
from utils.converters import convert_value_for_json, format_number
from utils.helpers import as_state_vector, check_time, make_rng, spawn_streams, to_output


class Color(Enum):
    RED = "red"


# --- Конвертеры ---

def test_convert_nested_numpy_values():
    value = {"a": np.float64(1.5), 2: [np.int64(3), np.array([1.0, math.nan])], "c": Color.RED}
    assert convert_value_for_json(value) == {"a": 1.5, "2": [3, [1.0, "nan"]], "c": "red"}


def test_convert_infinities():
    assert convert_value_for_json((math.inf, -math.inf)) == ["inf", "-inf"]


def test_convert_unknown_type_to_string():
    assert convert_value_for_json(1 + 2j) == "(1+2j)"


def test_format_number():
    assert format_number(0.1) == "0.1"
    assert format_number(np.float64(1e-20)) == "1e-20"
    assert format_number(math.nan) == "nan"
    assert format_number(-math.inf) == "-inf"


# --- Помощники ---

def test_as_state_vector():
    assert as_state_vector(2.0).shape == (1,)
    assert as_state_vector([[1, 2], [3, 4]]).dtype == np.float64
    with pytest.raises(ValueError):
        as_state_vector([])


def test_check_time():
    assert check_time(0.5).ndim == 0
    with pytest.raises(ValueError):
        check_time([0.2, 1.2])
    with pytest.raises(ValueError):
        check_time(math.nan)
    with pytest.raises(ValueError):
        check_time(0.005, lower=0.01)


def test_make_rng_passthrough():
    gen = np.random.default_rng(0)
    assert make_rng(gen) is gen
    assert make_rng(5).standard_normal() == np.random.default_rng(5).standard_normal()


def test_spawn_streams_independent_and_reproducible():
    a = [g.standard_normal() for g in spawn_streams(7, 3)]
    b = [g.standard_normal() for g in spawn_streams(7, 3)]
    assert a == b
    assert len(set(a)) == 3
    with pytest.raises(ValueError):
        spawn_streams(7, 0)


def test_to_output():
    assert isinstance(to_output(np.float64(2.0)), float)
    assert isinstance(to_output([1.0, 2.0]), np.ndarray)


# --- Пути вывода ---

def test_next_free_path_counts_up(tmp_path):
    assert next_free_path(tmp_path, "run.log") == tmp_path / "run.log"
    (tmp_path / "run.log").touch()
    (tmp_path / "run_1.log").touch()
    assert next_free_path(tmp_path, "run.log") == tmp_path / "run_2.log"


def test_ensure_parent_dir(tmp_path):
    target = ensure_parent_dir(tmp_path / "a" / "b" / "out.csv")
    assert target.parent.is_dir()


def test_resolve_output_path_stdout():
    assert resolve_output_path(None) is None
    assert resolve_output_path("-") is None
