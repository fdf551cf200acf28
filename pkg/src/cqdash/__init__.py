"""cqdash: a self-hostable neuro-symbolic competency-question service.

Curated and custom natural-language competency questions are answered by
schema-grounded SPARQL generation, execution against a knowledge-graph
endpoint, tabulation, charting, and LLM-produced interpretation.
"""

__version__ = "0.1.0"
