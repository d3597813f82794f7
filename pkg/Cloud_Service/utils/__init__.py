from .anonymity_checks import (
    WireAuditReport,
    audit_wire_payloads,
    source_labels,
    positional_clustering_p_value,
)

__all__ = [
    'WireAuditReport',
    'audit_wire_payloads',
    'source_labels',
    'positional_clustering_p_value'
]
