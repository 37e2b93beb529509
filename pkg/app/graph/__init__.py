from app.graph.arpa import ArpaModel, parse_arpa, read_arpa
from app.graph.builder import (
    assign_disambig,
    build_g,
    build_l,
    build_naive_graph,
    build_search_graph,
    build_t,
    unit_table,
    word_table,
)
from app.graph.lexicon import BLANK, Lexicon, Pronunciation, TokenInventory

__all__ = [
    "ArpaModel",
    "BLANK",
    "Lexicon",
    "Pronunciation",
    "TokenInventory",
    "assign_disambig",
    "build_g",
    "build_l",
    "build_naive_graph",
    "build_search_graph",
    "build_t",
    "parse_arpa",
    "read_arpa",
    "unit_table",
    "word_table",
]
