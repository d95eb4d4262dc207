"""QoS analysis of HARQ chase combining over a sensing-based cognitive radio link."""

__version__ = "0.1.0"
