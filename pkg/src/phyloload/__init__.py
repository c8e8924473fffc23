"""Functional load of phonological contrasts and phylogenetic comparative statistics."""
from .funcload import (
    ContrastSpec,
    DomainDistribution,
    FLResult,
    collapse_lexicon,
    compute_fl_table,
    domain_entropy,
    functional_load,
    load_appendix_a,
    make_length_spec,
    make_manner_spec,
    make_place_spec,
)
from .phylostats import (
    TraitVector,
    blomberg_k,
    correlation_p,
    gls_mean,
    k_permutation_test,
    phylo_correlation,
    simulate_bm,
)
from .phylotree import PhyloCovariance, Phylogeny, TreeSample, parse_newick, parse_tree_sample, prune, vcv
from .segmental import (
    SegmentInventory,
    build_distribution,
    extract_domains,
    normalize_vowel_length,
    parse_inventory,
    parse_lexicon,
)

__version__ = "0.1.0"
