"""Problem data for multistage adaptive robust linear programs.

An instance holds, for every stage ``t = 1..T``,

    T_t x + A_t s_t + B_t s_{t-1} + W_t y_t  = h0_t + H_t u_t
    L_t x + E_t s_t + G_t y_t               >= m0_t + M_t u_t

with costs ``c'x + sum_t d_t's_t + f_t'y_t`` and ``u = (u_1, ..., u_T)``
ranging over a bounded polytope.  ``s_0`` is fixed data.

Instances are read from and written to a JSON document whose matrices are
stored as ``{"rows", "cols", "triplets": [[i, j, v], ...]}``.  Missing
matrices are zero blocks of conforming size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

__all__ = [
    "InstanceError",
    "InstanceValidationError",
    "Polytope",
    "StageData",
    "XBounds",
    "Instance",
    "ValidationReport",
    "load_instance",
    "save_instance",
    "validate",
    "matrix_to_json",
    "matrix_from_json",
]


class InstanceError(ValueError):
    """The instance document does not follow the schema."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class InstanceValidationError(ValueError):
    """Dimensions or data of an instance are inconsistent."""

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(self.findings))


# ----------------------------------------------------------------------------
# data types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Polytope:
    """``{u : D u <= e, lo <= u <= hi}`` with finite box bounds.

    ``observed`` flags the coordinates a decision rule may react to.
    Lifted coordinates (e.g. deviation magnitudes of a budget set) are
    marked unobserved so that policies stay functions of the data only.
    """

    D: np.ndarray
    e: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    observed: np.ndarray | None = None

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        D = np.asarray(self.D, dtype=float).reshape(-1, lo.size)
        e = np.asarray(self.e, dtype=float).reshape(-1)
        obs = (np.ones(lo.size, dtype=bool) if self.observed is None
               else np.asarray(self.observed, dtype=bool).reshape(-1))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "observed", obs)

    @property
    def dim(self):
        return self.lo.size

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float).reshape(-1)
        return cls(np.zeros((0, lo.size)), np.zeros(0), lo, hi)

    def contains(self, u, tol=1e-8):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            return False
        if np.any(u < self.lo - tol) or np.any(u > self.hi + tol):
            return False
        return bool(np.all(self.D @ u <= self.e + tol))

    def is_nonempty(self):
        from .optkernel import LinearProgram, solve_lp

        lp = LinearProgram(
            c=np.zeros(self.dim), A_ub=self.D, b_ub=self.e,
            lo=self.lo, hi=self.hi)
        return solve_lp(lp).status == "optimal"


@dataclass(frozen=True)
class StageData:
    """Constraint and cost blocks of one stage (1-based ``t``)."""

    t: int
    n_s: int
    n_y: int
    n_u: int
    Tt: np.ndarray
    At: np.ndarray
    Bt: np.ndarray
    Wt: np.ndarray
    h0: np.ndarray
    Ht: np.ndarray
    Lt: np.ndarray
    Et: np.ndarray
    Gt: np.ndarray
    m0: np.ndarray
    Mt: np.ndarray
    dt: np.ndarray
    ft: np.ndarray

    @property
    def n_eq(self):
        return self.h0.size

    @property
    def n_in(self):
        return self.m0.size


@dataclass(frozen=True)
class XBounds:
    """Feasible region of the here-and-now vector ``x``.

    ``rows`` holds ``(coeffs, rhs, sense)`` with sense one of
    ``">="``, ``"<="`` or ``"=="``.
    """

    lo: np.ndarray
    hi: np.ndarray
    rows: tuple = ()

    def as_inequalities(self):
        """Return ``(C, b)`` with every row written as ``C x >= b``.

        Equality rows appear twice with opposite signs.
        """
        n = self.lo.size
        C, b = [], []
        for coeffs, rhs, sense in self.rows:
            a = np.asarray(coeffs, dtype=float)
            if sense in (">=", "=="):
                C.append(a)
                b.append(rhs)
            if sense in ("<=", "=="):
                C.append(-a)
                b.append(-rhs)
        if not C:
            return np.zeros((0, n)), np.zeros(0)
        return np.array(C, dtype=float).reshape(-1, n), np.array(b, dtype=float)


@dataclass(frozen=True)
class Instance:
    T: int
    n_x: int
    c: np.ndarray
    s0: np.ndarray
    x_bounds: XBounds
    stages: tuple
    U: Polytope
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_u_total(self):
        return sum(st.n_u for st in self.stages)

    def u_offsets(self):
        """Start offset of ``u_t`` inside the stacked ``u`` for each stage."""
        out, k = [], 0
        for st in self.stages:
            out.append(k)
            k += st.n_u
        return out

    def u_slice(self, t):
        off = self.u_offsets()[t - 1]
        return slice(off, off + self.stages[t - 1].n_u)

    def history_len(self, t):
        """Dimension of ``u^t = (u_1, ..., u_t)``."""
        return sum(st.n_u for st in self.stages[:t])


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    def __bool__(self):
        return not self.findings

    @property
    def ok(self):
        return not self.findings

    def add(self, msg):
        self.findings.append(msg)


# ----------------------------------------------------------------------------
# JSON schema
# ----------------------------------------------------------------------------

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": _NUM}
_MATRIX = {
    "type": "object",
    "required": ["rows", "cols"],
    "properties": {
        "rows": {"type": "integer", "minimum": 0},
        "cols": {"type": "integer", "minimum": 0},
        "triplets": {
            "type": "array",
            "items": {
                "type": "array",
                "minItems": 3,
                "maxItems": 3,
                "prefixItems": [{"type": "integer"}, {"type": "integer"}, _NUM],
            },
        },
    },
}
_STAGE_MATS = ("Tt", "At", "Bt", "Wt", "Ht", "Lt", "Et", "Gt", "Mt")
_STAGE_VECS = ("h0", "m0", "dt", "ft")

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["T", "stages", "U"],
    "properties": {
        "name": {"type": "string"},
        "T": {"type": "integer", "minimum": 1},
        "n_x": {"type": "integer", "minimum": 0},
        "c": _VEC,
        "s0": _VEC,
        "x_bounds": {
            "type": "object",
            "properties": {
                "lo": {"type": "array", "items": _NUM_OR_NULL},
                "hi": {"type": "array", "items": _NUM_OR_NULL},
                "rows": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["coeffs", "rhs", "sense"],
                        "properties": {
                            "coeffs": _VEC,
                            "rhs": _NUM,
                            "sense": {"enum": [">=", "<=", "=="]},
                        },
                    },
                },
            },
        },
        "stages": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n_s", "n_y", "n_u"],
                "properties": {
                    "n_s": {"type": "integer", "minimum": 0},
                    "n_y": {"type": "integer", "minimum": 0},
                    "n_u": {"type": "integer", "minimum": 0},
                    **{k: _MATRIX for k in _STAGE_MATS},
                    **{k: _VEC for k in _STAGE_VECS},
                },
            },
        },
        "U": {
            "type": "object",
            "required": ["dim", "lo", "hi"],
            "properties": {
                "dim": {"type": "integer", "minimum": 0},
                "lo": _VEC,
                "hi": _VEC,
                "D": _MATRIX,
                "e": _VEC,
                "observed": {"type": "array", "items": {"type": "boolean"}},
            },
        },
        "meta": {"type": "object"},
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)


def _json_path(err):
    path = "$"
    for p in err.absolute_path:
        path += f"[{p}]" if isinstance(p, int) else f".{p}"
    return path


def matrix_from_json(obj, rows=None, cols=None, where="$"):
    """Dense array from the triplet form; ``None`` gives a zero block."""
    if obj is None:
        return np.zeros((rows or 0, cols or 0))
    r, c = obj["rows"], obj["cols"]
    M = np.zeros((r, c))
    for k, (i, j, v) in enumerate(obj.get("triplets", [])):
        if not (0 <= i < r and 0 <= j < c):
            raise InstanceError(f"triplet index ({i}, {j}) outside {r}x{c}",
                                f"{where}.triplets[{k}]")
        M[i, j] += v
    return M


def matrix_to_json(M):
    M = np.asarray(M, dtype=float)
    rr, cc = np.nonzero(M)
    return {
        "rows": int(M.shape[0]),
        "cols": int(M.shape[1]),
        "triplets": [[int(i), int(j), float(M[i, j])] for i, j in zip(rr, cc)],
    }


def _bound_vec(vals, n, default):
    if vals is None:
        return np.full(n, default)
    return np.array([default if v is None else v for v in vals], dtype=float)


# ----------------------------------------------------------------------------
# load / save / validate
# ----------------------------------------------------------------------------


def load_instance(text):
    """Parse an instance document.

    Raises :class:`InstanceError` on schema violations (message carries the
    JSON path) and :class:`InstanceValidationError` on dimension mismatches.
    """
    try:
        doc = json.loads(text) if isinstance(text, (str, bytes)) else text
    except json.JSONDecodeError as exc:
        raise InstanceError(f"invalid JSON: {exc}") from exc
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise InstanceError(err.message, _json_path(err))

    T = doc["T"]
    stages_doc = doc["stages"]
    if len(stages_doc) != T:
        raise InstanceValidationError([f"T={T} but {len(stages_doc)} stages given"])
    n_x = doc.get("n_x", len(doc.get("c", [])))
    c = np.array(doc.get("c", [0.0] * n_x), dtype=float)
    s0 = np.array(doc.get("s0", []), dtype=float)

    xb = doc.get("x_bounds", {})
    x_bounds = XBounds(
        lo=_bound_vec(xb.get("lo"), n_x, -np.inf),
        hi=_bound_vec(xb.get("hi"), n_x, np.inf),
        rows=tuple((np.array(r["coeffs"], dtype=float), float(r["rhs"]), r["sense"])
                   for r in xb.get("rows", [])),
    )

    stages = []
    prev_ns = s0.size
    for k, sd in enumerate(stages_doc):
        where = f"$.stages[{k}]"
        n_s, n_y, n_u = sd["n_s"], sd["n_y"], sd["n_u"]
        n_eq = _infer_rows(sd, ("h0",), ("Tt", "At", "Bt", "Wt", "Ht"))
        n_in = _infer_rows(sd, ("m0",), ("Lt", "Et", "Gt", "Mt"))
        blocks = {
            "Tt": (n_eq, n_x), "At": (n_eq, n_s), "Bt": (n_eq, prev_ns),
            "Wt": (n_eq, n_y), "Ht": (n_eq, n_u),
            "Lt": (n_in, n_x), "Et": (n_in, n_s), "Gt": (n_in, n_y),
            "Mt": (n_in, n_u),
        }
        mats = {name: matrix_from_json(sd.get(name), *shape, where=f"{where}.{name}")
                for name, shape in blocks.items()}
        stages.append(StageData(
            t=k + 1, n_s=n_s, n_y=n_y, n_u=n_u, **mats,
            h0=np.array(sd.get("h0", [0.0] * n_eq), dtype=float),
            m0=np.array(sd.get("m0", [0.0] * n_in), dtype=float),
            dt=np.array(sd.get("dt", [0.0] * n_s), dtype=float),
            ft=np.array(sd.get("ft", [0.0] * n_y), dtype=float),
        ))
        prev_ns = n_s

    Ud = doc["U"]
    dim = Ud["dim"]
    D = matrix_from_json(Ud.get("D"), 0, dim, where="$.U.D")
    U = Polytope(D=D, e=np.array(Ud.get("e", [0.0] * D.shape[0]), dtype=float),
                 lo=np.array(Ud["lo"], dtype=float), hi=np.array(Ud["hi"], dtype=float),
                 observed=Ud.get("observed"))
    inst = Instance(T=T, n_x=n_x, c=c, s0=s0, x_bounds=x_bounds,
                    stages=tuple(stages), U=U, name=doc.get("name", ""),
                    meta=doc.get("meta", {}))
    report = validate(inst, check_nonempty=False)
    if not report.ok:
        raise InstanceValidationError(report.findings)
    return inst


def _infer_rows(sd, vecs, mats):
    for v in vecs:
        if v in sd:
            return len(sd[v])
    for m in mats:
        if m in sd:
            return sd[m]["rows"]
    return 0


def save_instance(inst):
    """Canonical JSON text of ``inst`` (sorted keys, exact float repr)."""
    doc = {
        "name": inst.name,
        "T": inst.T,
        "n_x": inst.n_x,
        "c": inst.c.tolist(),
        "s0": inst.s0.tolist(),
        "x_bounds": {
            "lo": [None if np.isinf(v) else float(v) for v in inst.x_bounds.lo],
            "hi": [None if np.isinf(v) else float(v) for v in inst.x_bounds.hi],
            "rows": [{"coeffs": np.asarray(a, dtype=float).tolist(), "rhs": float(r),
                      "sense": s} for a, r, s in inst.x_bounds.rows],
        },
        "stages": [
            {
                "n_s": st.n_s, "n_y": st.n_y, "n_u": st.n_u,
                **{k: matrix_to_json(getattr(st, k)) for k in _STAGE_MATS},
                **{k: getattr(st, k).tolist() for k in _STAGE_VECS},
            }
            for st in inst.stages
        ],
        "U": {
            "dim": inst.U.dim,
            "lo": inst.U.lo.tolist(),
            "hi": inst.U.hi.tolist(),
            "D": matrix_to_json(inst.U.D),
            "e": inst.U.e.tolist(),
            "observed": inst.U.observed.tolist(),
        },
    }
    if inst.meta:
        doc["meta"] = inst.meta
    return json.dumps(doc, sort_keys=True, indent=1)


def validate(inst, check_nonempty=True):
    """Collect every invariant violation of ``inst``; empty report means valid."""
    rep = ValidationReport()
    if len(inst.stages) != inst.T:
        rep.add(f"T={inst.T} but {len(inst.stages)} stages")
    if inst.c.shape != (inst.n_x,):
        rep.add(f"c has length {inst.c.size}, expected n_x={inst.n_x}")
    xb = inst.x_bounds
    if xb.lo.shape != (inst.n_x,) or xb.hi.shape != (inst.n_x,):
        rep.add("x_bounds lo/hi length differs from n_x")
    elif np.any(xb.lo > xb.hi):
        rep.add("x_bounds has lo > hi")
    for k, (a, _, _) in enumerate(xb.rows):
        if np.asarray(a).size != inst.n_x:
            rep.add(f"x_bounds row {k} has {np.asarray(a).size} coefficients, expected {inst.n_x}")

    prev_ns = inst.s0.size
    for st in inst.stages:
        t = st.t
        n_eq, n_in = st.n_eq, st.n_in
        eq = {"Tt": (n_eq, inst.n_x), "At": (n_eq, st.n_s), "Bt": (n_eq, prev_ns),
              "Wt": (n_eq, st.n_y), "Ht": (n_eq, st.n_u)}
        ineq = {"Lt": (n_in, inst.n_x), "Et": (n_in, st.n_s), "Gt": (n_in, st.n_y),
                "Mt": (n_in, st.n_u)}
        for label, blocks in (("equality", eq), ("inequality", ineq)):
            for name, shape in blocks.items():
                got = getattr(st, name).shape
                if got != shape:
                    rep.add(f"stage {t} {label} block {name} has shape {got}, expected {shape}")
        if st.dt.shape != (st.n_s,):
            rep.add(f"stage {t} dt has length {st.dt.size}, expected n_s={st.n_s}")
        if st.ft.shape != (st.n_y,):
            rep.add(f"stage {t} ft has length {st.ft.size}, expected n_y={st.n_y}")
        prev_ns = st.n_s

    U = inst.U
    if U.dim != inst.n_u_total:
        rep.add(f"U has dimension {U.dim}, stages need {inst.n_u_total}")
    if U.hi.shape != U.lo.shape or U.D.shape[1] != U.lo.size or U.e.size != U.D.shape[0]:
        rep.add("U arrays do not conform")
    elif U.observed.shape != U.lo.shape:
        rep.add("U observed mask does not match U dimension")
    else:
        if not (np.all(np.isfinite(U.lo)) and np.all(np.isfinite(U.hi))):
            rep.add("U box bounds must be finite")
        bad = np.nonzero(U.lo > U.hi)[0]
        if bad.size:
            rep.add(f"infeasible U: lo > hi at coordinate {int(bad[0])}")
        elif check_nonempty and not U.is_nonempty():
            rep.add("infeasible U: D u <= e has no point inside the box")
    return rep
