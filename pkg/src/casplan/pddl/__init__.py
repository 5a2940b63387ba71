"""PDDL+ input language: model, parser, and grounding."""
