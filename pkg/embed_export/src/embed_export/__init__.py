"""Item-metadata embedding export.

Builds one sentence per item from its title/categories/brand fields,
embeds it with a registered encoder and writes the vectors as a CCEMB1
file the recommender ingests directly.
"""

__version__ = "0.1.0"

# The paper-default encoder (instructor-xl) needs downloaded weights; the
# hashed bag-of-words encoder is always available, deterministic, and uses
# the same 768-wide output, so it serves as the out-of-the-box default.
DEFAULT_MODEL = "hashed-bow-768"
DEFAULT_INSTRUCTION = "Represent the Amazon title:"
