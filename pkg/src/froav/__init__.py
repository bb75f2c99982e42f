"""froav: retrieval-augmented report generation with multi-model judge
consensus, human feedback collection, and human/automated correlation
analysis, on top of a traced workflow engine and an append-only entity store."""

__version__ = "0.1.0"
