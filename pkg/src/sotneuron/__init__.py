"""SOT-MRAM + CMOS-inverter analog sigmoid neuron: device, circuit and architecture models."""

__version__ = "0.1.0"
