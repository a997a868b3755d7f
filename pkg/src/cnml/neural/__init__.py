"""Neural encoders, contrastive training and fine-tuning."""
