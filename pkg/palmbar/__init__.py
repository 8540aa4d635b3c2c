"""palmbar - Palm calculus and BAR verification toolkit for queueing networks."""

__version__ = "0.1.0"
