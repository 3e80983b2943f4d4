"""Per-event transformer embeddings and trace-level classifiers.

Communicates with the graph-side toolkit purely through its file formats:
the `export-text` TSVs and splits.tsv as input, the EmbeddingTable TSV and
the JSON report schema as output.
"""

from __future__ import annotations

__version__ = "0.1.0"
