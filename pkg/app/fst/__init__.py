from app.fst.ops import arcsort, compose, determinize, epsilon_closure, minimize, relabel, rm_epsilon, trim
from app.fst.paths import FstPath, languages_equal, path_enumerate, shortest_distance_to_final, shortest_path
from app.fst.symbols import EPS, SymbolTable
from app.fst.weight import INF, TropicalWeight
from app.fst.wfst import EPSILON, Arc, Wfst

__all__ = [
    "Arc",
    "EPS",
    "EPSILON",
    "INF",
    "FstPath",
    "SymbolTable",
    "TropicalWeight",
    "Wfst",
    "arcsort",
    "compose",
    "determinize",
    "epsilon_closure",
    "languages_equal",
    "minimize",
    "path_enumerate",
    "relabel",
    "rm_epsilon",
    "shortest_distance_to_final",
    "shortest_path",
    "trim",
]
