"""Single-copy entanglement distillation: singlet fractions, local filtering
and the thresholds they run into."""

__version__ = "0.1.0"
