# Proposal to ground-truth matching
