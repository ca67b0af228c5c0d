"""
System expressions over named Hamiltonians.

    A * B                 compose
    inv(A)                invert
    diff(A, B)            group difference A^-1 B
    conj(A, psi)          psi o Phi_A o psi^-1
    push(A, psi)          psi o Phi_A
    reparam(A, zeta)      zeta in linear(a, b), scale(s), flat(delta), round_trip, constspeed
    rescale(A, a, b)      compress onto [a, b]
    flatten(A, eps)       boundary flatten within eps

Automorphisms: identity, scale(lam), ztrans(c), heisenberg([a..], [b..]),
translate(dx, dy), timemap(A, s).
"""

import ast
import threading
from dataclasses import dataclass, field
from typing import Any, Optional

from contactflow.analysis import reparam
from contactflow.analysis.grids import SpatialGrid, time_knots
from contactflow.core.errors import ConfigError, ContactFlowError
from contactflow.core.logging import get_logger
from contactflow.dynamics.builtins import make_builtin
from contactflow.dynamics.cds import (
    Automorphism,
    ContactDynamicalSystem,
    compose,
    conjugate,
    group_difference,
    invert,
    push_forward,
)
from contactflow.dynamics.charts import ContactChart
from contactflow.schemas.experiment import HamiltonianSpec

logger = get_logger(__name__)

RESERVED = frozenset({"identity", "constspeed", "round_trip"})


def _parse(expression: str) -> ast.expr:
    try:
        return ast.parse(expression.strip(), mode="eval").body
    except SyntaxError as e:
        raise ConfigError(f"cannot parse expression {expression!r}: {e.msg}", 1, e.offset) from e


def referenced_names(expression: str) -> set[str]:
    """Hamiltonian names an expression refers to."""
    tree = _parse(expression)
    callees = {id(node.func) for node in ast.walk(tree) if isinstance(node, ast.Call)}
    return {
        node.id
        for node in ast.walk(tree)
        if isinstance(node, ast.Name) and id(node) not in callees and node.id not in RESERVED
    }


@dataclass
class ExpressionContext:
    """Everything expressions resolve against; generated systems are cached by name."""

    chart: ContactChart
    hamiltonians: dict[str, HamiltonianSpec]
    grid: SpatialGrid
    step: Optional[float] = None
    time_knots: int = 21
    _systems: dict[str, ContactDynamicalSystem] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def system(self, name: str) -> ContactDynamicalSystem:
        with self._lock:
            if name not in self._systems:
                if name not in self.hamiltonians:
                    raise ConfigError(f"unknown Hamiltonian '{name}'")
                spec = self.hamiltonians[name]
                H = make_builtin(self.chart, spec.builtin, spec.params, spec.interval, name)
                self._systems[name] = ContactDynamicalSystem.generate(H, self.step, name)
            return self._systems[name]


class _Resolver:
    def __init__(self, context: ExpressionContext, source: str):
        self.context = context
        self.source = source

    def fail(self, node: ast.AST, message: str) -> ConfigError:
        return ConfigError(f"{message} in {self.source!r}", 1, getattr(node, "col_offset", 0) + 1)

    def number(self, node: ast.expr) -> Any:
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -self.number(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, (ast.List, ast.Tuple)):
            return [self.number(item) for item in node.elts]
        raise self.fail(node, "expected a number")

    def _call(self, node: ast.expr) -> tuple[str, list[ast.expr]]:
        if isinstance(node, ast.Name):
            return node.id, []
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
            return node.func.id, list(node.args)
        raise self.fail(node, "expected a name or a call")

    def _arity(self, node: ast.expr, name: str, args: list, count: int) -> None:
        if len(args) != count:
            raise self.fail(node, f"{name} takes {count} argument(s), got {len(args)}")

    # ------------------------------------------
    # Systems
    # ------------------------------------------

    def system(self, node: ast.expr) -> ContactDynamicalSystem:
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
            return compose(self.system(node.left), self.system(node.right))
        if isinstance(node, ast.Name):
            if node.id in RESERVED:
                raise self.fail(node, f"'{node.id}' is not a system")
            return self.context.system(node.id)
        name, args = self._call(node)
        if name == "inv":
            self._arity(node, name, args, 1)
            return invert(self.system(args[0]))
        if name == "diff":
            self._arity(node, name, args, 2)
            return group_difference(self.system(args[0]), self.system(args[1]))
        if name in ("conj", "push"):
            self._arity(node, name, args, 2)
            operation = conjugate if name == "conj" else push_forward
            return operation(self.system(args[0]), self.automorphism(args[1]))
        if name == "reparam":
            self._arity(node, name, args, 2)
            return self.reparameterized(self.system(args[0]), args[1])
        if name == "rescale":
            self._arity(node, name, args, 3)
            return reparam.rescale_system(self.system(args[0]), self.number(args[1]), self.number(args[2]))
        if name == "flatten":
            self._arity(node, name, args, 2)
            knots = time_knots((0.0, 1.0), self.context.time_knots)
            return reparam.flatten_system(self.system(args[0]), self.number(args[1]), self.context.grid, knots)[0]
        raise self.fail(node, f"unknown system operation '{name}'")

    def reparameterized(self, system: ContactDynamicalSystem, node: ast.expr) -> ContactDynamicalSystem:
        name, args = self._call(node)
        if name == "constspeed":
            _, zeta = reparam.constant_speed(system.hamiltonian, self.context.grid)
            return reparam.reparameterize_system(system, zeta)
        builders = {
            "linear": lambda a, b: reparam.linear(a, b, target=system.interval),
            "scale": reparam.scale,
            "flat": lambda delta: reparam.flat(delta, system.interval),
            "round_trip": lambda: reparam.round_trip(system.interval),
            "identity": lambda: reparam.identity(system.interval),
        }
        if name not in builders:
            raise self.fail(node, f"unknown reparameterization '{name}'")
        return reparam.reparameterize_system(system, builders[name](*[self.number(a) for a in args]))

    # ------------------------------------------
    # Automorphisms
    # ------------------------------------------

    def automorphism(self, node: ast.expr) -> Automorphism:
        chart = self.context.chart
        name, args = self._call(node)
        if name == "identity":
            return Automorphism.identity(chart)
        if name == "timemap":
            self._arity(node, name, args, 2)
            return Automorphism.time_map(self.system(args[0]), self.number(args[1]))
        builders = {
            "scale": lambda lam: Automorphism.scaling(chart, lam),
            "ztrans": lambda c: Automorphism.z_translation(chart, c),
            "heisenberg": lambda a, b: Automorphism.heisenberg(chart, a, b),
            "translate": lambda dx, dy: Automorphism.torus_translation(chart, dx, dy),
        }
        if name not in builders:
            raise self.fail(node, f"unknown automorphism '{name}'")
        try:
            return builders[name](*[self.number(a) for a in args])
        except TypeError as e:
            raise self.fail(node, f"bad arguments for {name}: {e}") from e


def resolve_system(expression: str, context: ExpressionContext) -> ContactDynamicalSystem:
    """
    Build the system an expression denotes.

    Raises:
        ConfigError: Syntax errors, unknown names or operations, and construction failures
    """
    tree = _parse(expression)
    try:
        system = _Resolver(context, expression).system(tree)
    except ConfigError:
        raise
    except ContactFlowError as e:
        logger.error(f"Failed to build {expression!r}: {e}")
        raise ConfigError(f"cannot build {expression!r}: {e}") from e
    logger.info(f"Resolved {expression!r} to {system.name}")
    return system
