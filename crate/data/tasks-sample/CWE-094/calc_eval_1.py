def evaluate_expression(expression):
    '''
    Evaluate the arithmetic expression a user typed and return the
    numeric result.
    '''
