"""Byzantine-robust federated distillation simulator."""
