from django.urls import path
from rest_framework.routers import SimpleRouter
from .views import ConfigValidationView, ExperimentRunViewSet

router = SimpleRouter()
router.register(r'', ExperimentRunViewSet, basename='run')

urlpatterns = [
    # Antes del router: su ruta de detalle también casaría con 'validate-config'
    path('validate-config/', ConfigValidationView.as_view(), name='validate-config'),
] + router.urls
