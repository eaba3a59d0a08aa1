"""
Vistas de la API del laboratorio.

Registro de ejecuciones de solo lectura y validación de configuraciones.
Ningún experimento se ejecuta por HTTP: las corridas se lanzan desde
``main.py`` o ``manage.py experiment``.
"""

from rest_framework import permissions, status, viewsets
from rest_framework.decorators import action
from rest_framework.response import Response
from rest_framework.views import APIView

from .choices import Status
from .models import ExperimentRun
from .serializers import ExperimentConfigSerializer, ExperimentRunSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Consulta del registro de ejecuciones.

    Endpoints:
        GET /api/runs/                 - Listar ejecuciones (filtro opcional ?status=pass)
        GET /api/runs/{id}/            - Detalle de una ejecución
        GET /api/runs/{id}/verdict/    - Veredicto guardado

    Permisos:
        - AllowAny: el registro es público.
    """

    serializer_class = ExperimentRunSerializer
    permission_classes = [permissions.AllowAny]

    def get_queryset(self):
        queryset = ExperimentRun.objects.all()
        wanted = self.request.query_params.get('status')
        if wanted:
            queryset = queryset.filter(status=wanted)
        return queryset

    def list(self, request, *args, **kwargs):
        wanted = request.query_params.get('status')
        if wanted and wanted not in Status.values:
            return Response(
                {"error": f"Estado desconocido '{wanted}'. Valores: {', '.join(Status.values)}"},
                status=status.HTTP_400_BAD_REQUEST
            )
        return super().list(request, *args, **kwargs)

    @action(detail=True, methods=['get'])
    def verdict(self, request, pk=None):
        """Devuelve el veredicto tal como se escribió en verdict.json."""
        run = self.get_object()
        return Response(run.verdict, status=status.HTTP_200_OK)


class ConfigValidationView(APIView):
    """
    Valida una configuración de experimento sin ejecutarla.

    Endpoint:
        POST /api/runs/validate-config/

    Responses:
        200: {"config_hash": "...", "config": {...}} con todos los valores por defecto.
        400: Errores del serializador.
    """

    permission_classes = [permissions.AllowAny]

    def post(self, request):
        serializer = ExperimentConfigSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)
        return Response(
            {"config_hash": serializer.config_hash(), "config": serializer.canonical()},
            status=status.HTTP_200_OK
        )
