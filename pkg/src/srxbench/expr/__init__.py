"""Expression trees: construction, evaluation, calculus, simplification, parsing."""

from .calculus import UnknownDerivativeError, differentiate, gradient_trees
from .evaluation import evaluate, evaluate_batch, param_jacobian
from .functions import (FUNCTIONS, GP_FUNCTIONS, ITEA_TRANSFORMS, FunctionSet,
                        Primitive)
from .itexpr import ITExpression, ITTerm, it_to_tree, monomials
from .kernels import ExprIndexError, compile_tree
from .parse import (ParseError, UnknownIdentifierError, from_prefix, parse,
                    render, to_prefix)
from .simplify import HitVerdict, is_hit, simplify
from .tree import (Binary, Constant, ExprTree, Node, Parameter, Unary,
                   Variable, depth, n_params, size, substitute_params,
                   variables)

__all__ = [
    "Binary", "Constant", "ExprTree", "Node", "Parameter", "Unary", "Variable",
    "FUNCTIONS", "GP_FUNCTIONS", "ITEA_TRANSFORMS", "FunctionSet", "Primitive",
    "ITExpression", "ITTerm", "it_to_tree", "monomials",
    "ExprIndexError", "UnknownDerivativeError", "ParseError", "UnknownIdentifierError",
    "compile_tree", "evaluate", "evaluate_batch", "param_jacobian",
    "differentiate", "gradient_trees", "simplify", "is_hit", "HitVerdict",
    "parse", "render", "to_prefix", "from_prefix",
    "size", "depth", "n_params", "variables", "substitute_params",
]
