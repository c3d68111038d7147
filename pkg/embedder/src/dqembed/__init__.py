"""Frozen contextual embedding export for the dialogue grid scorer.

Encodes each utterance of a corpus independently with a pretrained language
model, pools subword vectors back onto the corpus tokens, and writes the
binary embedding file the scorer ingests.  The two packages communicate only
through file formats: the corpus JSON on the way in, the ``DQEM`` container
on the way out.
"""

from .dqem import read_embedding_file, write_embedding_file
from .export import AlignmentError, export_corpus, verify

__version__ = "0.1.0"

__all__ = ["AlignmentError", "export_corpus", "read_embedding_file", "verify",
           "write_embedding_file", "__version__"]
