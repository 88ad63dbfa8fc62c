"""YAML problem files.

A problem file looks like::

    # comments are allowed
    name: scalar tracking
    system:
      A: [[2]]
      B: [[1]]
    cost:
      Q: [[1]]
      R: [[1]]
      S: [[0]]          # optional, m x n
    P_f: [[0.5]]        # optional terminal cost
    Lambda: [[0]]       # optional rotation
    K_hat: [[1.5]]      # optional pre-stabilizing feedback
    tolerances:         # optional ToleranceConfig overrides
      psd_tol: 1e-9

Matrices are nested row lists, a bare number (1 x 1), or an explicit
``{rows: r, cols: c, data: [...]}`` mapping with row-major ``data``.
"""

import warnings
from dataclasses import dataclass, fields

import numpy as np
import yaml

from . import matkit
from .errors import EconLQError, ProblemFormatError
from .matkit import DEFAULT_TOL, ToleranceConfig
from .system import LtiSystem, StageCost

OPTIONAL_MATRICES = ("P_f", "Lambda", "K_hat", "P")


@dataclass
class Problem:
    system: LtiSystem
    cost: StageCost
    tol: ToleranceConfig = DEFAULT_TOL
    name: str = None
    P_f: np.ndarray = None
    Lambda: np.ndarray = None
    K_hat: np.ndarray = None
    P: np.ndarray = None


def parse_matrix(obj, field):
    """Convert a YAML node to a 2-D float array, naming ``field`` on error."""
    if isinstance(obj, dict):
        missing = {"rows", "cols", "data"} - set(obj)
        if missing:
            raise ProblemFormatError(f"{field}: missing key(s) {', '.join(sorted(missing))}")
        try:
            rows, cols = int(obj["rows"]), int(obj["cols"])
        except (TypeError, ValueError):
            raise ProblemFormatError(f"{field}: rows/cols must be integers") from None
        data = obj["data"]
        if not isinstance(data, list):
            raise ProblemFormatError(f"{field}: data must be a flat list")
        if rows < 0 or cols < 0 or len(data) != rows * cols:
            raise ProblemFormatError(
                f"{field}: data has {len(data)} entries, expected rows*cols = {rows * cols}"
            )
        values = [_number(v, field) for v in data]
        return np.array(values, dtype=float).reshape(rows, cols)
    if isinstance(obj, (int, float, str)) and not isinstance(obj, bool):
        return np.array([[_number(obj, field)]])
    if isinstance(obj, list):
        if not obj:
            raise ProblemFormatError(f"{field}: empty matrix")
        if all(isinstance(r, list) for r in obj):
            widths = {len(r) for r in obj}
            if len(widths) != 1:
                raise ProblemFormatError(f"{field}: ragged matrix (row lengths {sorted(widths)})")
            return np.array([[_number(v, field) for v in r] for r in obj], dtype=float)
        if any(isinstance(r, list) for r in obj):
            raise ProblemFormatError(f"{field}: mixes rows and scalars")
        # a flat list is a column vector
        return np.array([[_number(v, field)] for v in obj], dtype=float)
    raise ProblemFormatError(f"{field}: expected a matrix, got {type(obj).__name__}")


def _number(v, field):
    if isinstance(v, bool):
        raise ProblemFormatError(f"{field}: boolean is not a number")
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ProblemFormatError(f"{field}: non-numeric entry {v!r}") from None
    if not np.isfinite(x):
        raise ProblemFormatError(f"{field}: non-finite entry {v!r}")
    return x


def _symmetric(M, field, tol):
    asym = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if M.shape[0] != M.shape[1]:
        raise ProblemFormatError(f"{field}: must be square, got {M.shape[0]}x{M.shape[1]}")
    if asym > tol.psd_tol * max(1.0, float(np.max(np.abs(M)))):
        warnings.warn(f"{field}: asymmetry {asym:.3g} removed by symmetrization", UserWarning, stacklevel=3)
    return matkit.symmetrize(M)


def _tolerances(node):
    if node is None:
        return DEFAULT_TOL
    if not isinstance(node, dict):
        raise ProblemFormatError("tolerances: expected a mapping")
    known = {f.name for f in fields(ToleranceConfig)}
    unknown = set(node) - known
    if unknown:
        raise ProblemFormatError(f"tolerances: unknown key(s) {', '.join(sorted(unknown))}")
    values = {}
    for key, v in node.items():
        values[key] = int(_number(v, f"tolerances.{key}")) if key == "max_iterations" else _number(
            v, f"tolerances.{key}"
        )
    try:
        return DEFAULT_TOL.with_overrides(**values)
    except ValueError as exc:
        raise ProblemFormatError(f"tolerances: {exc}") from None


def _load_yaml(text, source):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ProblemFormatError(f"{source}:{where}: {problem}") from None


def loads_problem(text, source="<string>"):
    doc = _load_yaml(text, source)
    if not isinstance(doc, dict):
        raise ProblemFormatError(f"{source}: top level must be a mapping")
    for section in ("system", "cost"):
        if not isinstance(doc.get(section), dict):
            raise ProblemFormatError(f"{section}: missing or not a mapping")
    tol = _tolerances(doc.get("tolerances"))
    sysd, costd = doc["system"], doc["cost"]
    for key, sec in (("A", sysd), ("B", sysd), ("Q", costd), ("R", costd)):
        if key not in sec:
            raise ProblemFormatError(f"{'system' if sec is sysd else 'cost'}.{key}: missing")
    A = parse_matrix(sysd["A"], "system.A")
    B = parse_matrix(sysd["B"], "system.B")
    Q = _symmetric(parse_matrix(costd["Q"], "cost.Q"), "cost.Q", tol)
    R = _symmetric(parse_matrix(costd["R"], "cost.R"), "cost.R", tol)
    S = parse_matrix(costd["S"], "cost.S") if costd.get("S") is not None else None
    try:
        system = LtiSystem(A, B)
        cost = StageCost(Q, R, S, tol).check_against(system)
    except EconLQError as exc:
        raise ProblemFormatError(str(exc)) from None
    extras = {}
    for key in OPTIONAL_MATRICES:
        if doc.get(key) is None:
            continue
        M = parse_matrix(doc[key], key)
        expected = (system.m, system.n) if key == "K_hat" else (system.n, system.n)
        if M.shape != expected:
            raise ProblemFormatError(f"{key}: expected {expected[0]}x{expected[1]}, got {M.shape[0]}x{M.shape[1]}")
        extras[key] = M if key == "K_hat" else _symmetric(M, key, tol)
    name = doc.get("name")
    return Problem(system, cost, tol, None if name is None else str(name), **extras)


def load_problem(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFormatError(f"{path}: {exc.strerror}") from None
    return loads_problem(text, str(path))


def _matrix_node(M):
    M = np.asarray(M, dtype=float)
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": [float(v) for v in M.ravel()]}


def dumps_problem(problem):
    """Serialize with explicit dimensions; values round-trip exactly."""
    doc = {}
    if problem.name is not None:
        doc["name"] = problem.name
    doc["system"] = {"A": _matrix_node(problem.system.A), "B": _matrix_node(problem.system.B)}
    doc["cost"] = {
        "Q": _matrix_node(problem.cost.Q),
        "R": _matrix_node(problem.cost.R),
        "S": _matrix_node(problem.cost.S),
    }
    for key in OPTIONAL_MATRICES:
        M = getattr(problem, key)
        if M is not None:
            doc[key] = _matrix_node(M)
    if problem.tol != DEFAULT_TOL:
        doc["tolerances"] = {f.name: getattr(problem.tol, f.name) for f in fields(ToleranceConfig)}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def matrix_from_text(text, field, source="<string>"):
    """A single matrix from YAML text: either the matrix itself or a one-key mapping ``{name: matrix}``."""
    node = _load_yaml(text, source)
    if isinstance(node, dict) and not {"rows", "cols", "data"} <= set(node):
        if len(node) != 1:
            raise ProblemFormatError(f"{field}: expected a single matrix, got keys {sorted(node)}")
        (key, node), = node.items()
        field = f"{field}.{key}"
    return parse_matrix(node, field)


def load_matrix(source, field):
    """Matrix from a file path, or from an inline YAML literal when no such file exists."""
    try:
        with open(source, encoding="utf-8") as fh:
            return matrix_from_text(fh.read(), field, str(source))
    except FileNotFoundError:
        pass
    except OSError as exc:
        raise ProblemFormatError(f"{field}: cannot read {source}: {exc.strerror}") from None
    return matrix_from_text(source, field)


def load_vector_sequence(source, field):
    """List of vectors from a YAML file (list of lists) or a CSV file with one vector per row."""
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFormatError(f"{field}: cannot read {source}: {exc.strerror}") from None
    if str(source).lower().endswith(".csv"):
        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError:
                raise ProblemFormatError(f"{source}: line {lineno}: non-numeric entry") from None
        if len({len(r) for r in rows}) > 1:
            raise ProblemFormatError(f"{source}: rows have different lengths")
        return np.array(rows, dtype=float)
    node = _load_yaml(text, str(source))
    if isinstance(node, dict) and len(node) == 1:
        node = next(iter(node.values()))
    return parse_matrix(node, field)
