"""Online age-of-information-optimal sampling under unknown delay statistics."""

__version__ = "0.1.0"
