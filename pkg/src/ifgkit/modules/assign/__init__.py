from .core import (
    IGNORED, AnchorTargets, AssignmentConfig, MatchResult, ProposalLabel, anchor_targets, label_proposals,
    match_proposals_to_gt, sample_balanced,
)

__all__ = [
    'IGNORED', 'AnchorTargets', 'AssignmentConfig', 'MatchResult', 'ProposalLabel', 'anchor_targets',
    'label_proposals', 'match_proposals_to_gt', 'sample_balanced',
]
