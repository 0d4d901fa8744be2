"""Web-preemptable SPARQL: a quantum-bounded server fragment and a smart client for the rest."""

__version__ = "0.1.0"
