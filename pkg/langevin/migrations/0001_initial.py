# Generated by Django 5.2.8 on 2026-10-17 00:00

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('experiment', models.CharField(choices=[('simulate', 'Simulación'), ('rate_w1', 'Tasa en W1'), ('rate_tv', 'Tasa en TV'), ('contraction', 'Contracción'), ('drift_check', 'Deriva de Lyapunov'), ('schedule_check', 'Pasos decrecientes'), ('stationary_check', 'Distribución estacionaria'), ('one_step_check', 'Error a un paso'), ('generalization', 'Error de generalización'), ('moment_envelope', 'Envolvente de momentos')], max_length=32, verbose_name='Experimento')),
                ('config_hash', models.CharField(db_index=True, max_length=64, verbose_name='Hash de configuración')),
                ('seed', models.PositiveBigIntegerField(default=0, verbose_name='Semilla')),
                ('output_dir', models.CharField(max_length=500, verbose_name='Directorio de salida')),
                ('status', models.CharField(choices=[('pass', 'Aprobado'), ('fail', 'Fallido'), ('degenerate', 'Degenerado'), ('invalid', 'Inválido')], max_length=16, verbose_name='Estado')),
                ('verdict', models.JSONField(default=dict, verbose_name='Veredicto')),
                ('blowups', models.PositiveIntegerField(default=0, verbose_name='Explosiones')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Ejecución',
                'verbose_name_plural': 'Ejecuciones',
                'ordering': ['-created_at'],
            },
        ),
    ]
