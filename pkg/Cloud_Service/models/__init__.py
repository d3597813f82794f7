from .record_models import AnonymousRecord, CloudDataset, WIRE_KEYS

__all__ = [
    'AnonymousRecord',
    'CloudDataset',
    'WIRE_KEYS'
]
