"""
JSON parameter dumps for networks.

Floats are written with Python's shortest round-trip repr, so a 64-bit network
survives save/load bit-for-bit.
"""
from typing import Any, Dict

import numpy as np

from piper.autodiff.network import Network
from piper.common.errors import ContractViolation

FORMAT_VERSION = 1


def network_to_dict(net: Network) -> Dict[str, Any]:
    return {
        'format_version': FORMAT_VERSION,
        'layer_sizes': list(net.sizes),
        'activation': net.activation,
        'dtype': net.dtype.name,
        'params': [p.tolist() for p in net.params],
    }


def network_from_dict(document: Dict[str, Any]) -> Network:
    version = document.get('format_version')
    if version != FORMAT_VERSION:
        raise ContractViolation(f"unsupported checkpoint format_version {version!r}, expected {FORMAT_VERSION}")
    try:
        dtype = np.dtype(document.get('dtype', 'float64'))
        params = [np.array(p, dtype=dtype) for p in document['params']]
        return Network(document['layer_sizes'], document['activation'], params, dtype)
    except KeyError as e:
        raise ContractViolation(f"checkpoint is missing {e}")
