"""Symbolic complex rational expressions in z1, z2 and their conjugates.

The substrate for defining functions, boundary charts and iterated
vector-field coefficients: immutable hash-consed trees closed under
Wirtinger differentiation, with exact scalar evaluation, structural
conjugation, batch-compiled numpy evaluation, and exact truncated
polynomial expansion under affine holomorphic substitutions.

Grammar accepted by :func:`parse_expr` (EBNF)::

    expr   = term { ("+" | "-") term } ;
    term   = unary { ("*" | "/") unary } ;
    unary  = "-" unary | power ;
    power  = atom { "^" [ "-" ] integer } ;
    atom   = number | "i" | "z1" | "z2" | "zbar1" | "zbar2"
           | "conj" "(" expr ")" | "(" expr ")" ;

Numbers are decimal floats, "i" is the imaginary unit, exponents must be
integer literals.  Derivative results are cached per (node, variable) and
trees are interned, so repeated differentiation shares structure instead of
recomputing it.
"""

from __future__ import annotations

import re

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "SymError",
    "ParseError",
    "EvalDomainError",
    "UnsupportedInputError",
    "const",
    "var",
    "add",
    "mul",
    "div",
    "ipow",
    "neg",
    "sub",
    "conj",
    "swap_vars",
    "wirtinger",
    "parse_expr",
    "as_numpy_fn",
    "ChartPoly",
    "PolyInW",
    "taylor_in_chart",
]

VAR_NAMES = ("z1", "z2", "zbar1", "zbar2")
_CONJ_VAR = {"z1": "zbar1", "zbar1": "z1", "z2": "zbar2", "zbar2": "z2"}
_SWAP_VAR = {"z1": "z2", "z2": "z1", "zbar1": "zbar2", "zbar2": "zbar1"}

# Denominator moduli below this are treated as vanishing in scalar eval.
DIV_TOL = 1e-14


class SymError(Exception):
    pass


class ParseError(SymError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class EvalDomainError(SymError):
    """Raised when a quotient denominator vanishes at the evaluation point."""

    def __init__(self, node: "Expr", point):
        super().__init__(f"denominator ~ 0 at {point} in subexpression {node}")
        self.node = node
        self.point = point


class UnsupportedInputError(SymError):
    pass


# Interning table: structural key -> node.  Strong references keep node ids
# stable for the lifetime of the process, which the caches below rely on.
_INTERN: dict = {}


def _intern(key, build):
    node = _INTERN.get(key)
    if node is None:
        node = build()
        node._key = key
        _INTERN[key] = node
    return node


class Expr:
    """Immutable expression tree node."""

    __slots__ = ("_key", "_deriv", "_fn", "_conj")

    # -- construction sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, n):
        return ipow(self, n)

    def __neg__(self):
        return neg(self)

    # -- core API ------------------------------------------------------------
    def diff(self, varname: str) -> "Expr":
        """Formal Wirtinger partial with respect to one of the four variables."""
        if varname not in VAR_NAMES:
            raise SymError(f"unknown variable {varname!r}")
        cache = getattr(self, "_deriv", None)
        if cache is None:
            cache = {}
            self._deriv = cache
        d = cache.get(varname)
        if d is None:
            d = self._diff(varname)
            cache[varname] = d
        return d

    def conj(self) -> "Expr":
        c = getattr(self, "_conj", None)
        if c is None:
            c = self._conj_impl()
            self._conj = c
            c._conj = self
        return c

    def eval(self, p) -> complex:
        """Exact scalar evaluation at a point p = (z1, z2) in C^2."""
        z1, z2 = complex(p[0]), complex(p[1])
        env = {"z1": z1, "z2": z2, "zbar1": z1.conjugate(), "zbar2": z2.conjugate()}
        return self._eval(env, p)

    def is_polynomial(self) -> bool:
        return self._is_poly()

    def atoms(self):
        """Set of variable names occurring in the tree."""
        out = set()
        self._collect_vars(out)
        return out

    def _collect_vars(self, out):
        for ch in self._children():
            ch._collect_vars(out)

    def _children(self):
        return ()

    def __repr__(self):
        return self._fmt(0)


def _coerce(x):
    if isinstance(x, Expr):
        return x
    return const(x)


class Const(Expr):
    __slots__ = ("value",)

    def _diff(self, varname):
        return ZERO

    def _conj_impl(self):
        return const(self.value.conjugate())

    def _eval(self, env, p):
        return self.value

    def _is_poly(self):
        return True

    def _fmt(self, prec):
        v = self.value
        if v.imag == 0.0:
            s = repr(v.real)
        else:
            s = f"({v.real!r}{v.imag:+}i)" if v.real != 0.0 else f"{v.imag!r}*i"
        if v.imag == 0.0 and v.real < 0 and prec > 0:
            return f"({s})"
        return s


class Var(Expr):
    __slots__ = ("name",)

    def _diff(self, varname):
        return ONE if varname == self.name else ZERO

    def _conj_impl(self):
        return var(_CONJ_VAR[self.name])

    def _eval(self, env, p):
        return env[self.name]

    def _is_poly(self):
        return True

    def _collect_vars(self, out):
        out.add(self.name)

    def _fmt(self, prec):
        return self.name


class Add(Expr):
    __slots__ = ("terms",)

    def _children(self):
        return self.terms

    def _diff(self, varname):
        return add(*[t.diff(varname) for t in self.terms])

    def _conj_impl(self):
        return add(*[t.conj() for t in self.terms])

    def _eval(self, env, p):
        return sum(t._eval(env, p) for t in self.terms)

    def _is_poly(self):
        return all(t._is_poly() for t in self.terms)

    def _fmt(self, prec):
        s = " + ".join(t._fmt(1) for t in self.terms).replace("+ -", "- ")
        return f"({s})" if prec > 1 else s


class Mul(Expr):
    __slots__ = ("factors",)

    def _children(self):
        return self.factors

    def _diff(self, varname):
        fs = self.factors
        terms = []
        for i, f in enumerate(fs):
            df = f.diff(varname)
            if df is ZERO:
                continue
            terms.append(mul(*fs[:i], df, *fs[i + 1 :]))
        return add(*terms)

    def _conj_impl(self):
        return mul(*[f.conj() for f in self.factors])

    def _eval(self, env, p):
        out = 1.0 + 0.0j
        for f in self.factors:
            out *= f._eval(env, p)
        return out

    def _is_poly(self):
        return all(f._is_poly() for f in self.factors)

    def _fmt(self, prec):
        s = "*".join(f._fmt(2) for f in self.factors)
        return f"({s})" if prec > 2 else s


class Div(Expr):
    __slots__ = ("num", "den")

    def _children(self):
        return (self.num, self.den)

    def _diff(self, varname):
        u, v = self.num, self.den
        du, dv = u.diff(varname), v.diff(varname)
        return div(sub(mul(du, v), mul(u, dv)), ipow(v, 2))

    def _conj_impl(self):
        return div(self.num.conj(), self.den.conj())

    def _eval(self, env, p):
        d = self.den._eval(env, p)
        if abs(d) < DIV_TOL:
            raise EvalDomainError(self, p)
        return self.num._eval(env, p) / d

    def _is_poly(self):
        return False

    def _fmt(self, prec):
        s = f"{self.num._fmt(2)}/{self.den._fmt(3)}"
        return f"({s})" if prec > 2 else s


class Pow(Expr):
    __slots__ = ("base", "n")

    def _children(self):
        return (self.base,)

    def _diff(self, varname):
        db = self.base.diff(varname)
        return mul(const(self.n), ipow(self.base, self.n - 1), db)

    def _conj_impl(self):
        return ipow(self.base.conj(), self.n)

    def _eval(self, env, p):
        return self.base._eval(env, p) ** self.n

    def _is_poly(self):
        return self.base._is_poly()

    def _fmt(self, prec):
        return f"{self.base._fmt(3)}^{self.n}"


# -- smart constructors (constant folding, zero/one elimination, power merge) --

def const(value) -> Const:
    value = complex(value)

    def build():
        c = Const.__new__(Const)
        c.value = value
        return c

    return _intern(("c", value.real, value.imag), build)


def var(name: str) -> Var:
    if name not in VAR_NAMES:
        raise SymError(f"unknown variable {name!r}")

    def build():
        v = Var.__new__(Var)
        v.name = name
        return v

    return _intern(("v", name), build)


ZERO = const(0.0)
ONE = const(1.0)


def add(*terms) -> Expr:
    flat = []
    csum = 0.0 + 0.0j
    for t in terms:
        if isinstance(t, Add):
            ts = t.terms
        else:
            ts = (t,)
        for u in ts:
            if isinstance(u, Const):
                csum += u.value
            else:
                flat.append(u)
    if csum != 0.0:
        flat.append(const(csum))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    key = ("+",) + tuple(id(t) for t in flat)

    def build():
        a = Add.__new__(Add)
        a.terms = tuple(flat)
        return a

    return _intern(key, build)


def mul(*factors) -> Expr:
    flat = []
    cprod = 1.0 + 0.0j
    for f in factors:
        if isinstance(f, Mul):
            fs = f.factors
        else:
            fs = (f,)
        for u in fs:
            if isinstance(u, Const):
                cprod *= u.value
            else:
                flat.append(u)
    if cprod == 0.0:
        return ZERO
    if cprod != 1.0:
        flat.insert(0, const(cprod))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    key = ("*",) + tuple(id(f) for f in flat)

    def build():
        m = Mul.__new__(Mul)
        m.factors = tuple(flat)
        return m

    return _intern(key, build)


def div(num, den) -> Expr:
    num, den = _coerce(num), _coerce(den)
    if isinstance(den, Const):
        if den.value == 0.0:
            raise SymError("division by the constant zero")
        return mul(const(1.0 / den.value), num)
    if isinstance(num, Const) and num.value == 0.0:
        return ZERO
    key = ("/", id(num), id(den))

    def build():
        d = Div.__new__(Div)
        d.num = num
        d.den = den
        return d

    return _intern(key, build)


def ipow(base, n) -> Expr:
    if not isinstance(n, (int, np.integer)):
        raise SymError(f"exponent must be an integer, got {n!r}")
    n = int(n)
    base = _coerce(base)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if n < 0:
        return div(ONE, ipow(base, -n))
    if isinstance(base, Const):
        return const(base.value**n)
    if isinstance(base, Pow):
        return ipow(base.base, base.n * n)
    key = ("^", id(base), n)

    def build():
        p = Pow.__new__(Pow)
        p.base = base
        p.n = n
        return p

    return _intern(key, build)


def neg(e) -> Expr:
    return mul(const(-1.0), _coerce(e))


def sub(a, b) -> Expr:
    return add(_coerce(a), neg(b))


def conj(e: Expr) -> Expr:
    """Structural conjugate: swaps z and zbar and conjugates constants."""
    return _coerce(e).conj()


def wirtinger(e: Expr, varname: str) -> Expr:
    """Formal Wirtinger partial of e with respect to z1, z2, zbar1 or zbar2."""
    return _coerce(e).diff(varname)


_swap_cache: dict = {}


def swap_vars(e: Expr) -> Expr:
    """Exchange the roles of the two coordinates (z1 <-> z2, zbar1 <-> zbar2)."""
    got = _swap_cache.get(id(e))
    if got is not None:
        return got
    if isinstance(e, Const):
        out = e
    elif isinstance(e, Var):
        out = var(_SWAP_VAR[e.name])
    elif isinstance(e, Add):
        out = add(*[swap_vars(t) for t in e.terms])
    elif isinstance(e, Mul):
        out = mul(*[swap_vars(f) for f in e.factors])
    elif isinstance(e, Div):
        out = div(swap_vars(e.num), swap_vars(e.den))
    elif isinstance(e, Pow):
        out = ipow(swap_vars(e.base), e.n)
    else:  # pragma: no cover
        raise SymError(f"unknown node {e!r}")
    _swap_cache[id(e)] = out
    return out


def max_denominator_power(e: Expr) -> int:
    """Largest integer power appearing in any quotient denominator."""
    best = 0
    stack = [(e, False)]
    seen = set()
    while stack:
        node, in_den = stack.pop()
        if (id(node), in_den) in seen:
            continue
        seen.add((id(node), in_den))
        if isinstance(node, Pow) and in_den:
            best = max(best, node.n)
            stack.append((node.base, True))
        elif isinstance(node, Div):
            stack.append((node.num, in_den))
            if not isinstance(node.den, Pow):
                best = max(best, 1)
            stack.append((node.den, True))
        else:
            for ch in node._children():
                stack.append((ch, in_den))
    return best


# -- batch compilation -------------------------------------------------------

def as_numpy_fn(e: Expr):
    """Compile the tree to a function of (z1, z2) numpy arrays.

    Common subexpressions are emitted once.  Quotients are plain divisions:
    callers are responsible for keeping denominators away from zero (invalid
    rows are expected to be masked out afterwards).
    """
    f = getattr(e, "_fn", None)
    if f is not None:
        return f
    names: dict = {}
    lines = []
    counter = [0]

    def emit(node) -> str:
        got = names.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Const):
            v = node.value
            s = f"complex({v.real!r}, {v.imag!r})"
            names[id(node)] = s
            return s
        if isinstance(node, Var):
            s = {"z1": "z1", "z2": "z2", "zbar1": "zb1", "zbar2": "zb2"}[node.name]
            names[id(node)] = s
            return s
        if isinstance(node, Add):
            expr = " + ".join(emit(t) for t in node.terms)
        elif isinstance(node, Mul):
            expr = " * ".join(emit(f_) for f_ in node.factors)
        elif isinstance(node, Div):
            expr = f"{emit(node.num)} / {emit(node.den)}"
        elif isinstance(node, Pow):
            expr = f"{emit(node.base)} ** {node.n}"
        else:  # pragma: no cover
            raise SymError(f"unknown node {node!r}")
        tname = f"t{counter[0]}"
        counter[0] += 1
        lines.append(f"    {tname} = {expr}")
        names[id(node)] = tname
        return tname

    result = emit(e)
    src = (
        "def _compiled(z1, z2):\n"
        "    zb1 = np.conjugate(z1)\n"
        "    zb2 = np.conjugate(z2)\n"
        + "\n".join(lines)
        + f"\n    return {result} + 0j*z1\n"
    )
    ns = {"np": np, "complex": complex}
    exec(src, ns)
    f = ns["_compiled"]
    e._fn = f
    return f


def eval_batch(e: Expr, Z: np.ndarray) -> np.ndarray:
    """Evaluate at points Z of shape (..., 2) complex; no denominator guard."""
    Z = np.asarray(Z, dtype=complex)
    return as_numpy_fn(e)(Z[..., 0], Z[..., 1])


# -- parser -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_INT_RE = re.compile(r"\d+$")


def _tokenize(text: str):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise ParseError(f"unexpected character {text[at]!r}", at)
        if m.lastgroup == "num":
            toks.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            toks.append(("ident", m.group("ident"), m.start("ident")))
        else:
            toks.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


def parse_expr(text: str) -> Expr:
    """Parse an expression string into a tree; raises ParseError with position."""
    toks = _tokenize(text)
    idx = [0]

    def peek():
        return toks[idx[0]]

    def advance():
        t = toks[idx[0]]
        idx[0] += 1
        return t

    def expect_op(ch):
        kind, val, pos = peek()
        if kind != "op" or val != ch:
            raise ParseError(f"expected {ch!r}", pos)
        advance()

    def parse_sum():
        e = parse_term()
        while True:
            kind, val, _ = peek()
            if kind == "op" and val in "+-":
                advance()
                rhs = parse_term()
                e = add(e, rhs) if val == "+" else sub(e, rhs)
            else:
                return e

    def parse_term():
        e = parse_unary()
        while True:
            kind, val, _ = peek()
            if kind == "op" and val in "*/":
                advance()
                rhs = parse_unary()
                e = mul(e, rhs) if val == "*" else div(e, rhs)
            else:
                return e

    def parse_unary():
        kind, val, _ = peek()
        if kind == "op" and val == "-":
            advance()
            return neg(parse_unary())
        return parse_power()

    def parse_power():
        e = parse_atom()
        while True:
            kind, val, _ = peek()
            if kind == "op" and val == "^":
                advance()
                sign = 1
                kind, val, pos = peek()
                if kind == "op" and val == "-":
                    advance()
                    sign = -1
                    kind, val, pos = peek()
                if kind != "num":
                    raise ParseError("expected integer exponent", pos)
                if not _INT_RE.match(val):
                    raise ParseError(f"non-integer exponent {val!r}", pos)
                advance()
                e = ipow(e, sign * int(val))
            else:
                return e

    def parse_atom():
        kind, val, pos = advance()
        if kind == "num":
            return const(float(val))
        if kind == "ident":
            if val in VAR_NAMES:
                return var(val)
            if val == "i":
                return const(1j)
            if val == "conj":
                expect_op("(")
                inner = parse_sum()
                expect_op(")")
                return conj(inner)
            raise ParseError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            inner = parse_sum()
            expect_op(")")
            return inner
        raise ParseError("expected a value", pos)

    e = parse_sum()
    kind, _, pos = peek()
    if kind != "end":
        raise ParseError("trailing input", pos)
    return e


# -- truncated polynomial expansions ------------------------------------------

class ChartPoly:
    """Polynomial in (w1, wbar1, w2, wbar2), coefficients keyed by exponents.

    Products truncate at total degree ``cap``; coefficients of retained
    degrees are exact because polynomial multiplication is degree-additive.
    """

    __slots__ = ("coef", "cap")

    def __init__(self, coef=None, cap=None):
        self.coef = dict(coef) if coef else {}
        self.cap = cap

    @staticmethod
    def constant(c, cap=None):
        c = complex(c)
        return ChartPoly({(0, 0, 0, 0): c} if c != 0 else {}, cap)

    @staticmethod
    def variable(slot: int, cap=None):
        e = [0, 0, 0, 0]
        e[slot] = 1
        return ChartPoly({tuple(e): 1.0 + 0j}, cap)

    def copy(self):
        return ChartPoly(self.coef, self.cap)

    def __add__(self, other):
        out = dict(self.coef)
        for k, v in other.coef.items():
            w = out.get(k, 0.0) + v
            if w == 0.0:
                out.pop(k, None)
            else:
                out[k] = w
        return ChartPoly(out, self.cap if self.cap is not None else other.cap)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        c = complex(c)
        if c == 0.0:
            return ChartPoly({}, self.cap)
        return ChartPoly({k: c * v for k, v in self.coef.items()}, self.cap)

    def __mul__(self, other):
        cap = self.cap if self.cap is not None else other.cap
        out: dict = {}
        for (i1, j1, k1, l1), a in self.coef.items():
            for (i2, j2, k2, l2), bcf in other.coef.items():
                key = (i1 + i2, j1 + j2, k1 + k2, l1 + l2)
                if cap is not None and sum(key) > cap:
                    continue
                w = out.get(key, 0.0) + a * bcf
                if w == 0.0:
                    out.pop(key, None)
                else:
                    out[key] = w
        return ChartPoly(out, cap)

    def ipow(self, n: int):
        if n < 0:
            raise UnsupportedInputError("negative power in polynomial expansion")
        result = ChartPoly.constant(1.0, self.cap)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def conjugate(self):
        return ChartPoly(
            {(j, i, l, k): v.conjugate() for (i, j, k, l), v in self.coef.items()},
            self.cap,
        )

    def truncated(self, cap: int):
        return ChartPoly(
            {k: v for k, v in self.coef.items() if sum(k) <= cap}, cap
        )

    def coeff(self, i, j, k, l) -> complex:
        return self.coef.get((i, j, k, l), 0.0 + 0j)

    def max_abs_coeff(self) -> float:
        return max((abs(v) for v in self.coef.values()), default=0.0)

    def degree(self) -> int:
        return max((sum(k) for k in self.coef), default=0)

    def eval(self, w1, w2):
        w1 = np.asarray(w1, dtype=complex)
        w2 = np.asarray(w2, dtype=complex)
        wb1, wb2 = np.conjugate(w1), np.conjugate(w2)
        pows: dict = {}

        def p(base, tag, n):
            key = (tag, n)
            got = pows.get(key)
            if got is None:
                got = base**n
                pows[key] = got
            return got

        out = np.zeros(np.broadcast(w1, w2).shape, dtype=complex)
        for (i, j, k, l), c in self.coef.items():
            term = c
            if i:
                term = term * p(w1, 0, i)
            if j:
                term = term * p(wb1, 1, j)
            if k:
                term = term * p(w2, 2, k)
            if l:
                term = term * p(wb2, 3, l)
            out = out + term
        return out

    def shear_w1(self, f_coeffs) -> "ChartPoly":
        """Substitute w1 -> w1 - f(w2) and wbar1 -> wbar1 - conj(f)(wbar2).

        ``f_coeffs[k]`` is the coefficient of w2^k in the holomorphic shear
        polynomial f (f_coeffs[0] and [1] are expected to be zero).
        """
        F = ChartPoly(
            {(0, 0, k, 0): complex(c) for k, c in enumerate(f_coeffs) if c != 0},
            self.cap,
        )
        Fb = F.conjugate()
        base1 = ChartPoly.variable(0, self.cap) - F
        base1b = ChartPoly.variable(1, self.cap) - Fb
        pow1: dict = {0: ChartPoly.constant(1.0, self.cap)}
        pow1b: dict = {0: ChartPoly.constant(1.0, self.cap)}

        def getpow(table, base, n):
            got = table.get(n)
            if got is None:
                got = getpow(table, base, n - 1) * base
                table[n] = got
            return got

        out = ChartPoly({}, self.cap)
        for (i, j, k, l), c in self.coef.items():
            term = getpow(pow1, base1, i) * getpow(pow1b, base1b, j)
            shifted: dict = {}
            for key, v in term.coef.items():
                nk = (key[0], key[1], key[2] + k, key[3] + l)
                if self.cap is not None and sum(nk) > self.cap:
                    continue
                shifted[nk] = v * c
            out = out + ChartPoly(shifted, self.cap)
        return out


class PolyInW:
    """Bivariate polynomial in (w2, wbar2), coefficients keyed by (j, l).

    ``P_k`` slices of a chart expansion are homogeneous of degree k,
    real-valued (a[j,l] = conj(a[l,j])) and carry no pure terms.
    """

    __slots__ = ("coef",)

    def __init__(self, coef=None):
        self.coef = {k: complex(v) for k, v in (coef or {}).items() if v != 0}

    def degree(self) -> int:
        return max((j + l for j, l in self.coef), default=0)

    def is_homogeneous(self, k: int) -> bool:
        return all(j + l == k for j, l in self.coef)

    def real_value_defect(self) -> float:
        return max(
            (
                abs(v - self.coef.get((l, j), 0.0 + 0j).conjugate())
                for (j, l), v in self.coef.items()
            ),
            default=0.0,
        )

    def pure_term_size(self) -> float:
        return max(
            (abs(v) for (j, l), v in self.coef.items() if j == 0 or l == 0),
            default=0.0,
        )

    def eval(self, w2):
        w2 = np.asarray(w2, dtype=complex)
        wb2 = np.conjugate(w2)
        out = np.zeros(w2.shape, dtype=complex)
        for (j, l), c in self.coef.items():
            out = out + c * w2**j * wb2**l
        return out

    def circle_values(self, thetas: np.ndarray) -> np.ndarray:
        """Values on the unit circle w2 = e^{i theta} (real for real-valued P)."""
        out = np.zeros(len(thetas), dtype=complex)
        for (j, l), c in self.coef.items():
            out = out + c * np.exp(1j * (j - l) * thetas)
        return out.real

    def __bool__(self):
        return bool(self.coef)

    def __repr__(self):
        if not self.coef:
            return "PolyInW(0)"
        parts = [
            f"({c.real:+.6g}{c.imag:+.6g}i)*w2^{j}*wb2^{l}"
            for (j, l), c in sorted(self.coef.items())
        ]
        return "PolyInW(" + " ".join(parts) + ")"


def taylor_in_chart(e: Expr, lin, shift, degree_cap: int) -> ChartPoly:
    """Expand a polynomial tree under the affine substitution z = A w + b.

    Returns the exact coefficients of all monomials in (w1, wbar1, w2, wbar2)
    of total degree <= degree_cap.  For polynomial inputs whose substituted
    degree is <= degree_cap the remainder is exactly zero.
    """
    if not e.is_polynomial():
        raise UnsupportedInputError("expansion requires a quotient-free expression")
    A = np.asarray(lin, dtype=complex).reshape(2, 2)
    b = np.asarray(shift, dtype=complex).reshape(2)
    if abs(np.linalg.det(A)) < 1e-14:
        raise UnsupportedInputError("affine substitution is not invertible")
    cap = int(degree_cap)
    zmap = {}
    for r in range(2):
        cf = {(0, 0, 0, 0): b[r]} if b[r] != 0 else {}
        if A[r, 0] != 0:
            cf[(1, 0, 0, 0)] = A[r, 0]
        if A[r, 1] != 0:
            cf[(0, 0, 1, 0)] = A[r, 1]
        zmap[f"z{r + 1}"] = ChartPoly(cf, cap)
        zmap[f"zbar{r + 1}"] = zmap[f"z{r + 1}"].conjugate()

    memo: dict = {}

    def convert(node) -> ChartPoly:
        got = memo.get(id(node))
        if got is not None:
            return got
        if isinstance(node, Const):
            out = ChartPoly.constant(node.value, cap)
        elif isinstance(node, Var):
            out = zmap[node.name]
        elif isinstance(node, Add):
            out = ChartPoly({}, cap)
            for t in node.terms:
                out = out + convert(t)
        elif isinstance(node, Mul):
            out = ChartPoly.constant(1.0, cap)
            for f in node.factors:
                out = out * convert(f)
        elif isinstance(node, Pow):
            out = convert(node.base).ipow(node.n)
        elif isinstance(node, Div):
            raise UnsupportedInputError("quotient node in polynomial expansion")
        else:  # pragma: no cover
            raise SymError(f"unknown node {node!r}")
        memo[id(node)] = out
        return out

    return convert(e)
