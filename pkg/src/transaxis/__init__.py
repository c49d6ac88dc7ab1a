"""transaxis: translational-axis level scores from controlled-vocabulary
co-occurrence embeddings, with citation-network analytics."""

__version__ = "0.1.0"
