"""Answer set solving: grounder and search engine."""
