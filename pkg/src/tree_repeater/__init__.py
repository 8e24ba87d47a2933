"""All-photonic repeater performance with tree-encoded link qubits."""

__version__ = "0.1.0"
