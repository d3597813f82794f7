from .models.record_models import AnonymousRecord, CloudDataset
from .collector import collect, RecordCollector, shuffle_records
from .transport import (
    Transport,
    InProcessTransport,
    SocketTransport,
    create_transport,
    encode_session,
)
from .cloud_trainer import (
    EvaluationReport,
    bootstrap_train,
    finetune,
    serve,
    evaluate,
    evaluate_fixed_embedding,
)

__all__ = [
    'AnonymousRecord',
    'CloudDataset',
    'collect',
    'RecordCollector',
    'shuffle_records',
    'Transport',
    'InProcessTransport',
    'SocketTransport',
    'create_transport',
    'encode_session',
    'EvaluationReport',
    'bootstrap_train',
    'finetune',
    'serve',
    'evaluate',
    'evaluate_fixed_embedding'
]
