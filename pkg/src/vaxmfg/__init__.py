"""Mean-field Nash equilibria for an SIR game with socialization and vaccination."""
