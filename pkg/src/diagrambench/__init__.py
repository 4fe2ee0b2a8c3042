"""Workbench for generating educational diagrams from texts and evaluating them.

Three LLM-driven generation methods (two discourse-analysis-guided in-context
variants and a zero-shot baseline) produce Graphviz diagrams; a formal rubric
with derived scores, an HTTP rating service, automated LLM scoring modes, and
inter-rater reliability statistics evaluate the results.
"""

__version__ = "0.1.0"
