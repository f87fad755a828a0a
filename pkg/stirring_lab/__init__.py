"""
Stirring Lab — симулятор процесса перемешивания (SSEP) с граничными резервуарами.

Состав:
- Микроскопическая динамика: метки active/passive, рождение/гибель в I_±
- Мезоскопическое уравнение для ρ_ε(x,t) и макроскопический предел
- Точные оракулы на малых решётках (мастер-уравнение, v-функции)
- Оценки Монте-Карло, пары частиц, каплинг с независимыми блужданиями
"""

__version__ = "1.0.0"
