"""Document question answering over synthetic hierarchical layouts.

Two small transformers encode the question (one bidirectional, one
causal); their features are concatenated, reduced by a learned affine
map, and matched per candidate against content and visual features to
predict answer sets of document elements. The numeric core is a
tape-based reverse-mode autodiff over numpy arrays.
"""

__version__ = "0.1.0"
