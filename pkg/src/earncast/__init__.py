"""earncast: cascaded multimodal prediction of next-day opening prices from
earnings-call numeric, text and image features."""

__version__ = "0.1.0"
