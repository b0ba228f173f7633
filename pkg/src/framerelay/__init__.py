"""framerelay: an extensible frame-streaming gateway.

Clients stream video frames to a relay server that routes each frame
through a selectable processor and returns visual annotations plus
prioritized text descriptions suitable for speech output.
"""

__version__ = "0.1.0"
