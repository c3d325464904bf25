"""Decision-tree representations of permissive controllers with algebraic predicates."""

__version__ = "0.1.0"
