"""
Functional load of vowel length in a toy lexicon
================================================

Build a small inventory and lexicon in memory, extract the tonic vowel and
following consonant from each word, and measure how much information the
short/long vowel contrast carries.
"""

from phyloload.funcload import (
    collapse_lexicon,
    domain_entropy,
    functional_load,
    make_length_spec,
    make_manner_spec,
    make_place_spec,
)
from phyloload.segmental import build_distribution, parse_inventory, parse_lexicon

inventory = parse_inventory(
    "symbol\tcategory\tlength\tquality\tplace\tmanner\n"
    "a\tV\tshort\ta\t\t\n"
    "aa\tV\tlong\ta\t\t\n"
    "i\tV\tshort\ti\t\t\n"
    "ii\tV\tlong\ti\t\t\n"
    "u\tV\tshort\tu\t\t\n"
    "uu\tV\tlong\tu\t\t\n"
    "p\tC\t\t\tlabial\tstop\n"
    "m\tC\t\t\tlabial\tnasal\n"
    "t\tC\t\t\tapical\tstop\n"
    "n\tC\t\t\tapical\tnasal\n"
    "w\tC\t\t\tlabial\tglide\n"
    "j\tC\t\t\tlaminal\tglide\n"
)

# Words are space-separated segments.  "t a a n a" has two short vowels in a
# row and "p u w u t a" has the /uwu/ pattern; both become long vowels.
lexicon = parse_lexicon(
    "form\tgloss\n"
    "t a t a\tfather\n"
    "t aa t a\tfoot\n"
    "t a a n a\tstand\n"
    "m a n a\tgo\n"
    "p i t i\tsand\n"
    "p ii m a\tbone\n"
    "p u w u t a\tsmoke\n"
    "m u n a\teat\n"
    "n a p a\twater\n"
    "t i j i p a\tnose\n",
    inventory,
)

dist = build_distribution(lexicon, inventory)
print("domain types:", dict(dist.counts))
print("tokens:", dist.n)

# %%
# Each contrast spec lists sets of segments to merge.  Functional load is the
# entropy lost when the sets are collapsed.

for spec in (make_length_spec(inventory), make_manner_spec(inventory), make_place_spec(inventory)):
    merged = collapse_lexicon(dist, spec)
    print(f"{spec.name}: H = {domain_entropy(dist):.3f} -> {domain_entropy(merged):.3f}, "
          f"FL = {functional_load(dist, spec):.3f} bits")
