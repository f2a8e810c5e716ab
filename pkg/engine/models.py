from django.db import models


class TrainRun(models.Model):
    """
    Registry entry for one training stage execution.
    Checkpoints and metric history on disk remain the source of truth.
    """
    STAGE_CHOICES = [
        ('detector', 'Detector'),
        ('gan', 'GAN'),
        ('fusion', 'Fusion'),
    ]
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    experiment_id = models.CharField(max_length=255, db_index=True)
    stage = models.CharField(max_length=20, choices=STAGE_CHOICES)
    domain = models.CharField(max_length=10, blank=True, default='', help_text="Image domain for detector runs")
    fold = models.IntegerField(null=True, blank=True)
    seed = models.BigIntegerField(default=0)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running', db_index=True)
    epochs_completed = models.IntegerField(default=0)
    best_val_loss = models.FloatField(null=True, blank=True)
    checkpoint_dir = models.CharField(max_length=1024, blank=True, default='')
    history_path = models.CharField(max_length=1024, blank=True, default='')
    config = models.JSONField(default=dict, blank=True, help_text="Resolved stage configuration")
    error = models.TextField(blank=True, default='')
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        verbose_name = "Training run"
        verbose_name_plural = "Training runs"
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['experiment_id', 'stage', 'fold'], name='engine_trai_experim_5c1f0e_idx'),
        ]

    def __str__(self):
        fold = "all" if self.fold is None else self.fold
        return f"{self.experiment_id}/{self.stage}/{self.domain or '-'}/fold {fold} ({self.status})"
