"""Multi-aspect retrieval: relevance, credibility and misinformation re-ranking."""

__version__ = "0.1.0"
