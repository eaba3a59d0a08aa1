from django.contrib import admin
from .models import ExperimentRun

@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('experiment', 'status', 'seed', 'blowups', 'created_at')
    search_fields = ('config_hash', 'output_dir')
    list_filter = ('experiment', 'status')
    readonly_fields = ('verdict', 'created_at', 'updated_at')
