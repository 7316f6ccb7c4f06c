"""Scenario configuration: YAML loading, number parsing and validation."""

import ast
import math
import operator
from pathlib import Path

import numpy as np
import yaml

from .exceptions import ConfigurationError

_CONSTANTS = {"pi": math.pi, "e": math.e}
_FUNCS = {"ln": math.log, "log": math.log, "sqrt": math.sqrt, "exp": math.exp,
          "cos": math.cos, "sin": math.sin}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id in _CONSTANTS:
        return _CONSTANTS[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval(node.operand))
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ConfigurationError(f"unsupported expression element {ast.dump(node)}")


def parse_number(value) -> float:
    """Parse a number or a small arithmetic expression such as ``"1 + ln(2)"``.

    Only numeric literals, ``pi``, ``e``, ``+ - * / **`` and the functions
    ``ln log sqrt exp cos sin`` are accepted.
    """
    if isinstance(value, bool):
        raise ConfigurationError(f"expected a number, got {value!r}")
    if isinstance(value, (int, float, np.floating, np.integer)):
        return float(value)
    if isinstance(value, str):
        try:
            tree = ast.parse(value.strip(), mode="eval")
        except SyntaxError:
            raise ConfigurationError(f"cannot parse number {value!r}") from None
        return float(_eval(tree))
    raise ConfigurationError(f"expected a number, got {value!r}")


def parse_vector(values, name="vector") -> np.ndarray:
    if not isinstance(values, (list, tuple)):
        raise ConfigurationError(f"{name} must be a list of numbers")
    try:
        return np.array([parse_number(v) for v in values], dtype=float)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{name}: {exc}") from None


def load_yaml(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigurationError(f"{where}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data
