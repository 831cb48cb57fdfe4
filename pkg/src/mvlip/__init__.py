"""Multi-view lipreading toolkit.

End-to-end viseme recognition from multi-view lip videos: per-view
spatiotemporal encoders, view-temporal attention, a hybrid CTC/attention
objective with joint beam-search decoding, plus attention-driven frame
compression and a pairwise human-rating service.
"""

__version__ = "0.1.0"
