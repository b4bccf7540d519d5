"""Capture ingestion, flow encodings and the FLOWSET dataset format."""

from robusttc.flowio.dataset import SPLIT_CODES, Dataset, split_dataset
from robusttc.flowio.flows import (FLAT_LENGTH, TS_BYTES, TS_PACKETS, RawFlow, Sample,
                                   assemble_flows, encode, encode_flat, encode_timeseries)
from robusttc.flowio.flowset import dumps_flowset, loads_flowset, read_flowset, write_flowset
from robusttc.flowio.pcap import FlowKey, Packet, parse_pcap, write_pcap
from robusttc.flowio.synth import synth_dataset, synth_flows

__all__ = [
    "Dataset", "FlowKey", "Packet", "RawFlow", "Sample", "SPLIT_CODES",
    "FLAT_LENGTH", "TS_BYTES", "TS_PACKETS",
    "assemble_flows", "encode", "encode_flat", "encode_timeseries", "split_dataset",
    "dumps_flowset", "loads_flowset", "read_flowset", "write_flowset",
    "parse_pcap", "write_pcap", "synth_dataset", "synth_flows",
]
