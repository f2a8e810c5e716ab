from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('experiment_id', models.CharField(db_index=True, max_length=255)),
                ('stage', models.CharField(choices=[('detector', 'Detector'), ('gan', 'GAN'), ('fusion', 'Fusion')], max_length=20)),
                ('domain', models.CharField(blank=True, default='', help_text='Image domain for detector runs', max_length=10)),
                ('fold', models.IntegerField(blank=True, null=True)),
                ('seed', models.BigIntegerField(default=0)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], db_index=True, default='running', max_length=20)),
                ('epochs_completed', models.IntegerField(default=0)),
                ('best_val_loss', models.FloatField(blank=True, null=True)),
                ('checkpoint_dir', models.CharField(blank=True, default='', max_length=1024)),
                ('history_path', models.CharField(blank=True, default='', max_length=1024)),
                ('config', models.JSONField(blank=True, default=dict, help_text='Resolved stage configuration')),
                ('error', models.TextField(blank=True, default='')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['experiment_id', 'stage', 'fold'], name='engine_trai_experim_5c1f0e_idx')],
            },
        ),
    ]
