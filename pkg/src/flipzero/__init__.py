"""Self-play reinforcement-learning Othello engine.

Subpackages and modules: `board` (rules, transcripts, openings), `net`
(policy-value network and training), `search` (PUCT tree search),
`selfplay` (game generation and datasets), `pipeline` (the generation
loop), `arena` (engine matches), `server` (HTTP play), `cli` (operator
entry points).
"""

__version__ = "0.1.0"
