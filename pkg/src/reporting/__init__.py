# Result persistence and report rendering
