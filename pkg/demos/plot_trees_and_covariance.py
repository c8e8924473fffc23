"""
Trees, pruning and the phylogenetic covariance matrix
=====================================================

Parse a Newick tree, look at the shared-path covariance matrix it implies,
and check that pruning a tree leaves the covariances of the kept tips alone.
"""

import numpy as np

from phyloload.phylotree import parse_newick, prune, to_newick, vcv

tree = parse_newick("(((Alpha:1,Beta:1):1,'Gamma delta':2):1,(Epsilon:2.5,Zeta:2.5):0.5);")
print(tree.tip_labels)
print("ultrametric:", tree.is_ultrametric(), "height:", tree.height())

# %%
# Entry (i, j) is the length of the path from the root to the most recent
# common ancestor of tips i and j.  The diagonal holds root-to-tip depths.

C = vcv(tree)
np.set_printoptions(precision=2, suppress=True)
print(C.taxa)
print(C.matrix)

# %%
# Pruning removes tips and suppresses the internal nodes left with one child.

small = prune(tree, ["Alpha", "Gamma delta", "Zeta"])
print(to_newick(small))
keep = ["Alpha", "Gamma delta", "Zeta"]
print(np.array_equal(vcv(small, keep).matrix, C.submatrix(keep).matrix))
