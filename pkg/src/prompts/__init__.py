# Text prompts, tokenizer and toy text encoder
