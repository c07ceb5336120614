"""Conversation engine for slot-filling recommendation over item catalogs.

Subpackages by concern: `model` (states and transformations), `dtree`
(question trees), `strategy` (bounded-interaction search and sequence
compression), `reduction` (decision-table embedding), `sim` (dialog
simulation), `data` (catalog and ratings I/O), `cli` (command line).
"""

__version__ = "0.1.0"
